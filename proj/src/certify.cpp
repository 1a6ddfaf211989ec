#include "csrb/certify.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "csrb/parallel.hpp"

namespace csrb {

namespace {

// The production bound/dual formulas are written once, against an engine;
// instantiating with ValueEngine evaluates directly, with TapeEngine records
// the identical arithmetic for gradients. The reference implementations
// further down are deliberately separate code.
struct ValueEngine {
  using V = Tensor;
  V constant(Tensor t) { return t; }
  const Tensor& val(const V& v) const { return v; }
  V matvec(const V& a, const V& b) { return csrb::matvec(a, b); }
  V matvec_t(const V& a, const V& b) { return csrb::matvec_t(a, b); }
  V matmul_tn(const V& a, const V& b) { return csrb::matmul_tn(a, b); }
  V transpose(const V& a) { return csrb::transpose(a); }
  V rowscale(const V& d, const V& M) { return csrb::rowscale(d, M); }
  V add(const V& a, const V& b) { return csrb::add(a, b); }
  V sub(const V& a, const V& b) { return csrb::sub(a, b); }
  V mul(const V& a, const V& b) { return csrb::mul(a, b); }
  V div(const V& a, const V& b) { return csrb::div(a, b); }
  V neg(const V& a) { return csrb::neg(a); }
  V scale(const V& a, double s) { return csrb::scale(a, s); }
  V relu(const V& a) { return csrb::relu(a); }
  V row_l1(const V& a) { return csrb::row_l1(a); }
  V col_l1(const V& a) { return csrb::col_l1(a); }
};

struct TapeEngine {
  Tape& tape;
  using V = Tape::Id;
  V constant(Tensor t) { return tape.constant(std::move(t)); }
  const Tensor& val(V v) const { return tape.value(v); }
  V matvec(V a, V b) { return tape.matvec(a, b); }
  V matvec_t(V a, V b) { return tape.matvec_t(a, b); }
  V matmul_tn(V a, V b) { return tape.matmul_tn(a, b); }
  V transpose(V a) { return tape.transpose(a); }
  V rowscale(V d, V M) { return tape.rowscale(d, M); }
  V add(V a, V b) { return tape.add(a, b); }
  V sub(V a, V b) { return tape.sub(a, b); }
  V mul(V a, V b) { return tape.mul(a, b); }
  V div(V a, V b) { return tape.div(a, b); }
  V neg(V a) { return tape.neg(a); }
  V scale(V a, double s) { return tape.scale(a, s); }
  V relu(V a) { return tape.relu(a); }
  V row_l1(V a) { return tape.row_l1(a); }
  V col_l1(V a) { return tape.col_l1(a); }
};

template <class E>
struct GLayer {
  typename E::V W, b;
};

template <class E>
struct GRelax {
  std::vector<typename E::V> lower, upper;  // per hidden level
  std::vector<typename E::V> d, lmask;
};

// Classify neurons from the numeric values of (l, u); the masks are
// gradient-free constants while d keeps u/(u-l) differentiable on the
// unstable set. Stable entries route through a mask so no 0/0 forms.
template <class E>
void attach_level_relax(E& eng, GRelax<E>& rx, const typename E::V& lo,
                        const typename E::V& up) {
  const Tensor& lov = eng.val(lo);
  const Tensor& upv = eng.val(up);
  Tensor unstable(lov.shape()), on(lov.shape()), stable(lov.shape());
  for (std::size_t i = 0; i < lov.size(); ++i) {
    if (upv[i] <= 0.0) {
      stable[i] = 1.0;
    } else if (lov[i] >= 0.0) {
      on[i] = 1.0;
      stable[i] = 1.0;
    } else {
      unstable[i] = 1.0;
    }
  }
  auto mu = eng.constant(std::move(unstable));
  auto num = eng.mul(mu, up);
  auto den = eng.add(eng.mul(mu, eng.sub(up, lo)), eng.constant(std::move(stable)));
  rx.d.push_back(eng.add(eng.div(num, den), eng.constant(std::move(on))));
  rx.lmask.push_back(eng.mul(mu, lo));
}

template <class E>
GRelax<E> bounds_impl(E& eng, const std::vector<GLayer<E>>& layers,
                      const typename E::V& x, double eps) {
  using V = typename E::V;
  GRelax<E> rx;
  const std::size_t L = layers.size();
  for (std::size_t h = 1; h < L; ++h) {
    V lo, up;
    if (h == 1) {
      V pre = eng.add(eng.matvec(layers[0].W, x), layers[0].b);
      V spread = eng.scale(eng.row_l1(layers[0].W), eps);
      lo = eng.sub(pre, spread);
      up = eng.add(pre, spread);
    } else {
      // One dual pass with the identity objective on level h; columns are
      // neurons. P[t] is the dual variable at hidden level t.
      std::vector<V> P(h);
      V cur{};
      for (std::size_t t = h; t-- > 1;) {
        V hat = (t == h - 1) ? eng.transpose(layers[t].W)
                             : eng.matmul_tn(layers[t].W, cur);
        cur = eng.rowscale(rx.d[t - 1], hat);
        P[t] = cur;
      }
      V hat0 = eng.matmul_tn(layers[0].W, cur);
      V lin = eng.add(layers[h - 1].b, eng.matvec_t(hat0, x));
      for (std::size_t t = 1; t < h; ++t)
        lin = eng.add(lin, eng.matvec_t(P[t], layers[t - 1].b));
      V spread = eng.scale(eng.col_l1(hat0), eps);
      lo = eng.sub(lin, spread);
      up = eng.add(lin, spread);
      for (std::size_t t = 1; t < h; ++t) {
        lo = eng.add(lo, eng.matvec_t(eng.relu(eng.neg(P[t])), rx.lmask[t - 1]));
        up = eng.sub(up, eng.matvec_t(eng.relu(P[t]), rx.lmask[t - 1]));
      }
    }
    attach_level_relax(eng, rx, lo, up);
    rx.lower.push_back(std::move(lo));
    rx.upper.push_back(std::move(up));
  }
  return rx;
}

template <class E>
typename E::V dual_multi_impl(E& eng, const std::vector<GLayer<E>>& layers,
                              const GRelax<E>& rx, const typename E::V& x,
                              double eps, const typename E::V& C_mat) {
  using V = typename E::V;
  const std::size_t L = layers.size();
  V N = eng.neg(C_mat);
  V S = eng.neg(eng.matvec_t(N, layers[L - 1].b));
  for (std::size_t t = L; t-- > 1;) {
    V hat = eng.matmul_tn(layers[t].W, N);
    N = eng.rowscale(rx.d[t - 1], hat);
    S = eng.add(S, eng.matvec_t(eng.relu(N), rx.lmask[t - 1]));
    S = eng.sub(S, eng.matvec_t(N, layers[t - 1].b));
  }
  V hat0 = eng.matmul_tn(layers[0].W, N);
  S = eng.sub(S, eng.matvec_t(hat0, x));
  S = eng.add(S, eng.scale(eng.col_l1(hat0), -eps));
  return S;
}

std::vector<GLayer<ValueEngine>> value_layers(const Network& net) {
  std::vector<GLayer<ValueEngine>> ls;
  ls.reserve(net.layers.size());
  for (const AffineLayer& l : net.layers) ls.push_back({l.W, l.b});
  return ls;
}

GRelax<ValueEngine> relax_from_bounds(ValueEngine& eng, const PreactBounds& bounds) {
  GRelax<ValueEngine> rx;
  for (std::size_t h = 0; h < bounds.lower.size(); ++h) {
    attach_level_relax(eng, rx, bounds.lower[h], bounds.upper[h]);
    rx.lower.push_back(bounds.lower[h]);
    rx.upper.push_back(bounds.upper[h]);
  }
  return rx;
}

void check_bound_args(const Network& net, const Tensor& x, double eps) {
  net.validate();
  if (eps < 0.0) throw NumericError("negative radius");
  if (x.size() != net.input_dim()) throw DimensionError("input length mismatch");
}

// Reference scalar dual pass: plain loops, no engine. Kept independent of
// the matrix-form implementation above on purpose.
double dual_scalar_ref(const std::vector<AffineLayer>& layers, std::size_t L,
                       const NeuronPartition& part, const Tensor& x, double eps,
                       const Tensor& c) {
  Tensor nu = neg(c);
  double J = -dot(nu, layers[L - 1].b);
  for (std::size_t t = L; t-- > 1;) {
    Tensor hat = matvec_t(layers[t].W, nu);
    nu = mul(part.d[t - 1], hat);
    J += dot(part.lmask[t - 1], relu(nu));
    J -= dot(nu, layers[t - 1].b);
  }
  Tensor hat0 = matvec_t(layers[0].W, nu);
  J -= dot(x, hat0);
  J -= eps * l1norm(hat0);
  return J;
}

}  // namespace

NeuronPartition partition(const PreactBounds& bounds) {
  NeuronPartition p;
  for (std::size_t h = 0; h < bounds.lower.size(); ++h) {
    const Tensor& lo = bounds.lower[h];
    const Tensor& up = bounds.upper[h];
    std::vector<std::int8_t> kind(lo.size());
    Tensor d(lo.shape()), lm(lo.shape());
    for (std::size_t j = 0; j < lo.size(); ++j) {
      if (up[j] <= 0.0) {
        kind[j] = -1;
      } else if (lo[j] >= 0.0) {
        kind[j] = 1;
        d[j] = 1.0;
      } else {
        kind[j] = 0;
        d[j] = up[j] / (up[j] - lo[j]);
        lm[j] = lo[j];
      }
    }
    p.kind.push_back(std::move(kind));
    p.d.push_back(std::move(d));
    p.lmask.push_back(std::move(lm));
  }
  return p;
}

PreactBounds compute_bounds(const Network& net, const Tensor& x, double eps) {
  check_bound_args(net, x, eps);
  ValueEngine eng;
  auto layers = value_layers(net);
  auto rx = bounds_impl(eng, layers, x, eps);
  PreactBounds out;
  out.epsilon = eps;
  out.lower = std::move(rx.lower);
  out.upper = std::move(rx.upper);
  for (const Tensor& t : out.lower)
    if (!t.all_finite()) throw NumericError("non-finite lower bound");
  for (const Tensor& t : out.upper)
    if (!t.all_finite()) throw NumericError("non-finite upper bound");
  return out;
}

PreactBounds compute_bounds_reference(const Network& net, const Tensor& x, double eps) {
  check_bound_args(net, x, eps);
  PreactBounds out;
  out.epsilon = eps;
  NeuronPartition part;
  for (std::size_t h = 1; h < net.layers.size(); ++h) {
    std::size_t n = net.layers[h - 1].W.rows();
    Tensor lo({n}), up({n});
    Tensor c({n});
    for (std::size_t j = 0; j < n; ++j) {
      c[j] = 1.0;
      lo[j] = dual_scalar_ref(net.layers, h, part, x, eps, c);
      c[j] = -1.0;
      up[j] = -dual_scalar_ref(net.layers, h, part, x, eps, c);
      c[j] = 0.0;
    }
    out.lower.push_back(lo);
    out.upper.push_back(up);
    PreactBounds level;
    level.lower.push_back(std::move(lo));
    level.upper.push_back(std::move(up));
    NeuronPartition lp = partition(level);
    part.kind.push_back(std::move(lp.kind[0]));
    part.d.push_back(std::move(lp.d[0]));
    part.lmask.push_back(std::move(lp.lmask[0]));
  }
  return out;
}

double dual_bound(const Network& net, const PreactBounds& bounds, const Tensor& x,
                  double eps, const Tensor& c) {
  check_bound_args(net, x, eps);
  if (bounds.lower.size() != net.hidden_levels())
    throw DimensionError("bounds do not match network depth");
  if (c.size() != net.class_count()) throw DimensionError("objective length mismatch");
  NeuronPartition part = partition(bounds);
  double J = dual_scalar_ref(net.layers, net.layers.size(), part, x, eps, c);
  if (!std::isfinite(J)) throw NumericError("non-finite dual bound");
  return J;
}

Tensor dual_bound_multi(const Network& net, const PreactBounds& bounds, const Tensor& x,
                        double eps, const Tensor& C_mat) {
  check_bound_args(net, x, eps);
  if (C_mat.rows() != net.class_count())
    throw DimensionError("objective matrix row count != class count");
  ValueEngine eng;
  auto layers = value_layers(net);
  auto rx = relax_from_bounds(eng, bounds);
  Tensor J = dual_multi_impl(eng, layers, rx, x, eps, C_mat);
  if (!J.all_finite()) throw NumericError("non-finite dual bound");
  return J;
}

TapedNet tape_params(Tape& tape, const Network& net) {
  net.validate();
  TapedNet tn;
  for (const AffineLayer& l : net.layers)
    tn.layers.push_back({tape.param(l.W), tape.param(l.b)});
  return tn;
}

namespace {

std::vector<GLayer<TapeEngine>> taped_layers(const TapedNet& net) {
  std::vector<GLayer<TapeEngine>> ls;
  ls.reserve(net.layers.size());
  for (const auto& l : net.layers) ls.push_back({l.W, l.b});
  return ls;
}

}  // namespace

TapedBounds taped_bounds(Tape& tape, const TapedNet& net, Tape::Id x, double eps) {
  TapeEngine eng{tape};
  auto rx = bounds_impl(eng, taped_layers(net), x, eps);
  return TapedBounds{std::move(rx.lower), std::move(rx.upper), std::move(rx.d),
                     std::move(rx.lmask)};
}

Tape::Id taped_dual_multi(Tape& tape, const TapedNet& net, const TapedBounds& bounds,
                          Tape::Id x, double eps, Tape::Id C_mat) {
  TapeEngine eng{tape};
  GRelax<TapeEngine> rx;
  rx.lower = bounds.lower;
  rx.upper = bounds.upper;
  rx.d = bounds.d;
  rx.lmask = bounds.lmask;
  return dual_multi_impl(eng, taped_layers(net), rx, x, eps, C_mat);
}

Tape::Id taped_forward(Tape& tape, const TapedNet& net, Tape::Id x) {
  Tape::Id z = x;
  for (std::size_t t = 0; t < net.layers.size(); ++t) {
    Tape::Id pre = tape.add(tape.matvec(net.layers[t].W, z), net.layers[t].b);
    z = (t + 1 < net.layers.size()) ? tape.relu(pre) : pre;
  }
  return z;
}

CertificationRecord certify_example(const Network& net, const Tensor& x, std::size_t y,
                                    double eps, const std::vector<std::size_t>& targets,
                                    std::size_t example_id) {
  const std::size_t m = net.class_count();
  if (y >= m) throw DimensionError("label out of range");
  for (std::size_t t : targets)
    if (t >= m || t == y) throw DimensionError("target class invalid");
  CertificationRecord rec;
  rec.example_id = example_id;
  rec.label = y;
  rec.targets = targets;
  if (targets.empty()) return rec;  // vacuously certified

  PreactBounds bounds = compute_bounds(net, x, eps);
  Tensor C_mat({m, targets.size()});
  for (std::size_t k = 0; k < targets.size(); ++k) {
    C_mat.at(y, k) += 1.0;
    C_mat.at(targets[k], k) -= 1.0;
  }
  Tensor J = dual_bound_multi(net, bounds, x, eps, C_mat);
  rec.J.assign(J.data(), J.data() + J.size());
  rec.verdicts.reserve(targets.size());
  for (double j : rec.J) {
    bool ok = j >= 0.0;
    rec.verdicts.push_back(ok);
    rec.certified = rec.certified && ok;
  }
  return rec;
}

PairGrid pairwise_grid(const Network& net, const std::vector<Tensor>& xs,
                       const std::vector<std::size_t>& ys, double eps,
                       std::size_t threads) {
  if (xs.size() != ys.size()) throw DimensionError("example/label count mismatch");
  const std::size_t m = net.class_count();
  PairGrid grid;
  grid.m = m;
  grid.frac.assign(m * m, 0.0);
  grid.class_count.assign(m, 0);

  std::vector<std::vector<std::size_t>> all_targets(m);
  for (std::size_t y = 0; y < m; ++y)
    for (std::size_t j = 0; j < m; ++j)
      if (j != y) all_targets[y].push_back(j);

  std::vector<CertificationRecord> recs(xs.size());
  parallel_for(xs.size(), threads, [&](std::size_t i) {
    recs[i] = certify_example(net, xs[i], ys[i], eps, all_targets[ys[i]], i);
  });

  std::vector<std::size_t> fails(m * m, 0);
  for (const CertificationRecord& r : recs) {
    grid.class_count[r.label]++;
    for (std::size_t k = 0; k < r.targets.size(); ++k)
      if (!r.verdicts[k]) fails[r.label * m + r.targets[k]]++;
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      grid.frac[i * m + j] =
          grid.class_count[i] == 0
              ? std::numeric_limits<double>::quiet_NaN()
              : static_cast<double>(fails[i * m + j]) /
                    static_cast<double>(grid.class_count[i]);
    }
  }
  return grid;
}

std::string grid_to_csv(const PairGrid& grid) {
  std::ostringstream os;
  os << "seed\\target";
  for (std::size_t j = 0; j < grid.m; ++j) os << ',' << j;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < grid.m; ++i) {
    os << i;
    for (std::size_t j = 0; j < grid.m; ++j) {
      double v = grid.at(i, j);
      if (std::isnan(v)) {
        os << ",nan";
      } else {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        os << ',' << buf;
      }
    }
    os << '\n';
  }
  return os.str();
}

std::string records_to_jsonl(const std::vector<CertificationRecord>& records) {
  std::ostringstream os;
  for (const CertificationRecord& r : records) {
    nlohmann::json j{{"example_id", r.example_id},
                     {"label", r.label},
                     {"targets", r.targets},
                     {"J", r.J},
                     {"verdicts", r.verdicts},
                     {"certified", r.certified}};
    os << j.dump() << '\n';
  }
  return os.str();
}

std::optional<Tensor> attack_oracle(const Network& net, const Tensor& x, std::size_t y,
                                    double eps, const std::vector<std::size_t>& targets,
                                    std::size_t budget, Rng& rng) {
  (void)y;
  if (targets.empty()) return std::nullopt;
  const std::size_t d = x.size();
  std::vector<char> is_target(net.class_count(), 0);
  for (std::size_t t : targets) is_target[t] = 1;

  const std::size_t sub = std::min<std::size_t>(d, 12);
  std::vector<std::size_t> coords(d);
  for (std::size_t i = 0; i < d; ++i) coords[i] = i;
  Tensor base({d});
  if (d > 12) {
    rng.shuffle(coords);
    coords.resize(sub);
    // coordinates outside the subset sit at a fixed random corner
    Tensor pin({d});
    for (std::size_t i = 0; i < d; ++i)
      pin[i] = rng.next_u64() & 1 ? eps : -eps;
    for (std::size_t c : coords) pin[c] = 0.0;
    base = std::move(pin);
  }

  const std::size_t corner_count = std::size_t{1} << sub;
  const std::size_t chunk = 256;
  std::vector<Tensor> deltas;
  deltas.reserve(chunk);

  auto flush = [&]() -> std::optional<Tensor> {
    if (deltas.empty()) return std::nullopt;
    Tensor X({d, deltas.size()});
    for (std::size_t k = 0; k < deltas.size(); ++k)
      for (std::size_t i = 0; i < d; ++i) X.at(i, k) = x[i] + deltas[k][i];
    Tensor logits = forward_batch(net, X);
    for (std::size_t k = 0; k < deltas.size(); ++k) {
      std::size_t best = 0;
      for (std::size_t r = 1; r < logits.rows(); ++r)
        if (logits.at(r, k) > logits.at(best, k)) best = r;
      if (is_target[best]) return deltas[k];
    }
    deltas.clear();
    return std::nullopt;
  };

  for (std::size_t mask = 0; mask < corner_count; ++mask) {
    Tensor delta = base;
    for (std::size_t b = 0; b < sub; ++b)
      delta[coords[b]] = (mask >> b) & 1 ? eps : -eps;
    deltas.push_back(std::move(delta));
    if (deltas.size() == chunk)
      if (auto hit = flush()) return hit;
  }
  for (std::size_t s = 0; s < budget; ++s) {
    Tensor delta({d});
    for (std::size_t i = 0; i < d; ++i) delta[i] = rng.uniform(-eps, eps);
    deltas.push_back(std::move(delta));
    if (deltas.size() == chunk)
      if (auto hit = flush()) return hit;
  }
  return flush();
}

}  // namespace csrb
