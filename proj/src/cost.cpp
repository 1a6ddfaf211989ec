#include "csrb/cost.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "csrb/dataset.hpp"
#include "csrb/rng.hpp"

namespace csrb {

std::size_t CostMatrix::nonzero_count() const {
  std::size_t n = 0;
  for (double v : entries)
    if (v != 0.0) ++n;
  return n;
}

double CostMatrix::sparsity() const {
  return static_cast<double>(nonzero_count()) / static_cast<double>(m * m - m);
}

void CostMatrix::validate() const {
  if (entries.size() != m * m) throw std::invalid_argument("cost matrix not m x m");
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t jp = 0; jp < m; ++jp) {
      double v = at(j, jp);
      if (!std::isfinite(v) || v < 0.0)
        throw std::invalid_argument("cost matrix entry (" + std::to_string(j) + "," +
                                    std::to_string(jp) + ") negative or non-finite");
      if (j == jp && v != 0.0)
        throw std::invalid_argument("cost matrix diagonal (" + std::to_string(j) +
                                    ") must be zero");
    }
  }
}

TaskSpec TaskSpec::single_pair(std::size_t s, std::size_t t) {
  TaskSpec sp;
  sp.kind = Kind::SinglePair;
  sp.s = s;
  sp.t = t;
  return sp;
}

TaskSpec TaskSpec::single_seed(std::size_t s) {
  TaskSpec sp;
  sp.kind = Kind::SingleSeed;
  sp.s = s;
  return sp;
}

TaskSpec TaskSpec::single_target(std::size_t t) {
  TaskSpec sp;
  sp.kind = Kind::SingleTarget;
  sp.t = t;
  return sp;
}

TaskSpec TaskSpec::random_pairs(std::size_t count, std::uint64_t rng_seed) {
  TaskSpec sp;
  sp.kind = Kind::RandomPairs;
  sp.count = count;
  sp.rng_seed = rng_seed;
  return sp;
}

TaskSpec TaskSpec::group(std::vector<std::size_t> seeds, std::vector<std::size_t> targets) {
  TaskSpec sp;
  sp.kind = Kind::GroupToGroup;
  sp.seeds = std::move(seeds);
  sp.targets = std::move(targets);
  return sp;
}

TaskSpec TaskSpec::small_large() {
  TaskSpec sp;
  sp.kind = Kind::SmallLarge;
  return sp;
}

TaskSpec TaskSpec::large_small() {
  TaskSpec sp;
  sp.kind = Kind::LargeSmall;
  return sp;
}

TaskSpec TaskSpec::small_large_variant() {
  TaskSpec sp;
  sp.kind = Kind::SmallLargeVariant;
  return sp;
}

namespace {

void check_class(std::size_t c, std::size_t m) {
  if (c >= m)
    throw std::invalid_argument("task class " + std::to_string(c) + " out of range");
}

}  // namespace

CostMatrix make_task(const TaskSpec& spec, std::size_t m) {
  CostMatrix C;
  C.m = m;
  C.entries.assign(m * m, 0.0);
  using K = TaskSpec::Kind;
  switch (spec.kind) {
    case K::SinglePair:
      check_class(spec.s, m);
      check_class(spec.t, m);
      if (spec.s == spec.t) throw std::invalid_argument("pair classes must differ");
      C.at(spec.s, spec.t) = 1.0;
      break;
    case K::SingleSeed:
      check_class(spec.s, m);
      for (std::size_t j = 0; j < m; ++j)
        if (j != spec.s) C.at(spec.s, j) = 1.0;
      break;
    case K::SingleTarget:
      check_class(spec.t, m);
      for (std::size_t j = 0; j < m; ++j)
        if (j != spec.t) C.at(j, spec.t) = 1.0;
      break;
    case K::Pairs:
      for (auto [s, t] : spec.pairs) {
        check_class(s, m);
        check_class(t, m);
        if (s == t) throw std::invalid_argument("pair classes must differ");
        C.at(s, t) = 1.0;
      }
      for (std::size_t s : spec.seed_rows) {
        check_class(s, m);
        for (std::size_t j = 0; j < m; ++j)
          if (j != s) C.at(s, j) = 1.0;
      }
      break;
    case K::RandomPairs: {
      std::size_t cells = m * m - m;
      if (spec.count > cells)
        throw std::invalid_argument("more random pairs than off-diagonal cells");
      std::vector<std::size_t> idx(cells);
      std::size_t k = 0;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
          if (i != j) idx[k++] = i * m + j;
      Rng rng = Rng::substream(spec.rng_seed, "task/random-pairs");
      rng.shuffle(idx);
      for (std::size_t p = 0; p < spec.count; ++p) C.entries[idx[p]] = 1.0;
      break;
    }
    case K::GroupToGroup:
      for (std::size_t s : spec.seeds) check_class(s, m);
      for (std::size_t t : spec.targets) check_class(t, m);
      for (std::size_t s : spec.seeds)
        for (std::size_t t : spec.targets)
          if (s != t) C.at(s, t) = 1.0;
      break;
    case K::SmallLarge:
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j)
          C.at(i, j) = static_cast<double>((j - i) * (j - i));
      break;
    case K::LargeSmall:
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < i; ++j)
          C.at(i, j) = static_cast<double>((i - j) * (i - j));
      break;
    case K::SmallLargeVariant:
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          if (j > i)
            C.at(i, j) = static_cast<double>((j - i) * (j - i));
          else if (i > j)
            C.at(i, j) = 0.1;
        }
      }
      break;
    case K::GroupWeighted: {
      for (std::size_t s : spec.seeds) check_class(s, m);
      std::vector<char> in_group(m, 0);
      for (std::size_t s : spec.seeds) in_group[s] = 1;
      for (std::size_t s : spec.seeds)
        for (std::size_t j = 0; j < m; ++j)
          if (j != s)
            C.at(s, j) = in_group[j] ? spec.in_group_cost : spec.out_group_cost;
      break;
    }
  }
  C.validate();
  return C;
}

TargetSets target_sets(const CostMatrix& C, const std::vector<std::size_t>& labels) {
  TargetSets ts;
  ts.omega.resize(C.m);
  ts.delta.resize(C.m);
  ts.counts.assign(C.m, 0);
  for (std::size_t j = 0; j < C.m; ++j) {
    for (std::size_t jp = 0; jp < C.m; ++jp)
      if (C.at(j, jp) != 0.0) ts.omega[j].push_back(jp);
    ts.delta[j] = !ts.omega[j].empty();
  }
  for (std::size_t y : labels) {
    if (y >= C.m) throw std::invalid_argument("label out of range for cost matrix");
    ts.counts[y]++;
  }
  return ts;
}

namespace {

// Looks up J for each costed target of the record's class; the record must
// contain every such target.
std::vector<double> costed_J(const CertificationRecord& rec,
                             const std::vector<std::size_t>& omega) {
  std::vector<double> out;
  out.reserve(omega.size());
  for (std::size_t target : omega) {
    auto it = std::find(rec.targets.begin(), rec.targets.end(), target);
    if (it == rec.targets.end())
      throw std::invalid_argument("record " + std::to_string(rec.example_id) +
                                  " missing costed target " + std::to_string(target));
    out.push_back(rec.J[static_cast<std::size_t>(it - rec.targets.begin())]);
  }
  return out;
}

}  // namespace

double cs_robust_error(const std::vector<CertificationRecord>& records,
                       const CostMatrix& C) {
  std::vector<std::vector<std::size_t>> omega(C.m);
  for (std::size_t j = 0; j < C.m; ++j)
    for (std::size_t jp = 0; jp < C.m; ++jp)
      if (C.at(j, jp) != 0.0) omega[j].push_back(jp);

  std::size_t candidates = 0, certified = 0;
  for (const CertificationRecord& rec : records) {
    if (omega[rec.label].empty()) continue;
    ++candidates;
    bool ok = true;
    for (double J : costed_J(rec, omega[rec.label])) ok = ok && J >= 0.0;
    if (ok) ++certified;
  }
  if (candidates == 0) throw MetricUndefined("cost-sensitive robust error: no candidate seeds");
  return 1.0 - static_cast<double>(certified) / static_cast<double>(candidates);
}

double robust_cost(const std::vector<CertificationRecord>& records, const CostMatrix& C) {
  std::vector<std::vector<std::size_t>> omega(C.m);
  for (std::size_t j = 0; j < C.m; ++j)
    for (std::size_t jp = 0; jp < C.m; ++jp)
      if (C.at(j, jp) != 0.0) omega[j].push_back(jp);

  std::size_t candidates = 0;
  double total = 0.0;
  for (const CertificationRecord& rec : records) {
    const auto& om = omega[rec.label];
    if (om.empty()) continue;
    ++candidates;
    std::vector<double> J = costed_J(rec, om);
    for (std::size_t k = 0; k < om.size(); ++k)
      if (J[k] < 0.0) total += C.at(rec.label, om[k]);
  }
  if (candidates == 0) throw MetricUndefined("robust cost: no candidate seeds");
  return total / static_cast<double>(candidates);
}

double misclassification_cost(const std::vector<std::size_t>& predictions,
                              const std::vector<std::size_t>& labels,
                              const CostMatrix& C) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("prediction/label count mismatch");
  if (predictions.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (labels[i] >= C.m || predictions[i] >= C.m)
      throw std::invalid_argument("class out of range for cost matrix");
    total += C.at(labels[i], predictions[i]);
  }
  return total / static_cast<double>(predictions.size());
}

CostMatrix parse_cost_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cost matrix: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
          ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {  // optional header row
        first = false;
        continue;
      }
      throw DataError("cost matrix: non-numeric cell in row " +
                      std::to_string(rows.size()));
    }
    first = false;
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("cost matrix: empty file");
  std::size_t m = rows.size();
  CostMatrix C;
  C.m = m;
  C.entries.reserve(m * m);
  for (const auto& row : rows) {
    if (row.size() != m)
      throw DataError("cost matrix: not square (" + std::to_string(m) +
                      " rows, row of " + std::to_string(row.size()) + " columns)");
    C.entries.insert(C.entries.end(), row.begin(), row.end());
  }
  try {
    C.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("cost matrix: ") + e.what());
  }
  return C;
}

std::string cost_matrix_to_csv(const CostMatrix& C) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t j = 0; j < C.m; ++j) {
    for (std::size_t jp = 0; jp < C.m; ++jp) {
      if (jp) os << ',';
      os << C.at(j, jp);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace csrb
