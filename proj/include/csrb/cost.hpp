#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "csrb/certify.hpp"

namespace csrb {

/// A metric whose denominator is empty (no candidate seeds).
class MetricUndefined : public std::runtime_error {
 public:
  explicit MetricUndefined(const std::string& msg) : std::runtime_error(msg) {}
};

/// m x m nonnegative cost matrix; entry (j, j') prices the adversarial
/// transformation of a class-j seed into predicted class j'. Diagonal is
/// identically zero.
struct CostMatrix {
  std::size_t m = 0;
  std::vector<double> entries;  // row-major

  double at(std::size_t j, std::size_t jp) const { return entries[j * m + jp]; }
  double& at(std::size_t j, std::size_t jp) { return entries[j * m + jp]; }
  std::size_t nonzero_count() const;
  /// nonzero cells / (m^2 - m)
  double sparsity() const;
  void validate() const;  // throws on negative entry or nonzero diagonal
};

/// Per-class target sets and candidate indicators for a labeled dataset.
struct TargetSets {
  std::vector<std::vector<std::size_t>> omega;  // Omega_j = {j' : C_{jj'} != 0}
  std::vector<bool> delta;                      // Omega_j nonempty
  std::vector<std::size_t> counts;              // N_j over the dataset
};

struct TaskSpec {
  enum class Kind {
    SinglePair,    // C_{st} = 1
    SingleSeed,    // C_{sj'} = 1 for all j' != s
    SingleTarget,  // C_{jt} = 1 for all j != t
    Pairs,         // explicit pair list plus whole seed-class rows
    RandomPairs,   // `count` off-diagonal cells drawn without replacement
    GroupToGroup,  // seeds x targets product (minus diagonal), cost 1
    SmallLarge,        // C_{ij} = (i-j)^2 for j > i
    LargeSmall,        // C_{ij} = (i-j)^2 for i > j
    SmallLargeVariant, // C_{ij} = (i-j)^2 for j > i, 0.1 for i > j
    GroupWeighted,     // seeds -> all targets; cost in_group_cost within the
                       // seed group, out_group_cost outside it
  };

  Kind kind = Kind::SinglePair;
  std::size_t s = 0, t = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> seed_rows;      // Pairs: whole rows
  std::vector<std::size_t> seeds, targets; // GroupToGroup / GroupWeighted
  std::size_t count = 0;       // RandomPairs
  std::uint64_t rng_seed = 0;  // RandomPairs
  double in_group_cost = 1.0, out_group_cost = 10.0;  // GroupWeighted

  static TaskSpec single_pair(std::size_t s, std::size_t t);
  static TaskSpec single_seed(std::size_t s);
  static TaskSpec single_target(std::size_t t);
  static TaskSpec random_pairs(std::size_t count, std::uint64_t rng_seed);
  static TaskSpec group(std::vector<std::size_t> seeds, std::vector<std::size_t> targets);
  static TaskSpec small_large();
  static TaskSpec large_small();
  static TaskSpec small_large_variant();
};

CostMatrix make_task(const TaskSpec& spec, std::size_t m);

TargetSets target_sets(const CostMatrix& C, const std::vector<std::size_t>& labels);

/// Fraction of candidate seeds (classes with delta = 1) not certified
/// against every costed target. Records must cover Omega of their class.
double cs_robust_error(const std::vector<CertificationRecord>& records,
                       const CostMatrix& C);

/// Average over candidate seeds of the summed costs of failed targets.
double robust_cost(const std::vector<CertificationRecord>& records,
                   const CostMatrix& C);

/// Mean C_{y, y_hat} over a prediction set (0 cost on the diagonal).
double misclassification_cost(const std::vector<std::size_t>& predictions,
                              const std::vector<std::size_t>& labels,
                              const CostMatrix& C);

CostMatrix parse_cost_matrix(const std::string& path);
std::string cost_matrix_to_csv(const CostMatrix& C);

}  // namespace csrb
