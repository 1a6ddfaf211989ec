#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "csrb/rng.hpp"
#include "csrb/tensor.hpp"

namespace csrb {

/// Thrown by loaders on malformed/inconsistent input files.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Dataset {
  std::vector<Tensor> xs;          // each in [0,1]^d
  std::vector<std::size_t> ys;     // < m
  std::size_t m = 0;
  std::size_t d = 0;
  std::string provenance;

  std::size_t size() const { return xs.size(); }
  void validate() const;
  std::vector<std::size_t> class_counts() const;
};

/// IDX pair loader (big-endian): images magic 0x00000803, labels 0x00000801.
/// Pixels scaled by 1/255 into [0,1].
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

/// CIFAR10 binary batches: 3073-byte records (label byte + 3072 pixel bytes).
Dataset load_cifar10(const std::vector<std::string>& batch_paths);

/// Desk-scale synthetic task: class means on a base-k lattice scaled into
/// [0.2, 0.8]^d, isotropic Gaussian noise with std `spread`, clipped to
/// [0,1]. Examples are grouped by class.
Dataset synth_blobs(Rng& rng, std::size_t m, std::size_t d, std::size_t per_class,
                    double spread);

struct FoldSplit {
  std::vector<std::size_t> fold_of;  // per example index
  std::size_t k = 0;
  std::size_t val_fold = 0;
};

/// Seeded shuffle, then contiguous blocks of near-equal size (difference
/// at most one).
FoldSplit split_folds(std::size_t n, std::size_t k, Rng& rng, std::size_t val_fold = 0);

Dataset subset(const Dataset& data, const std::vector<std::size_t>& idx);
std::pair<Dataset, Dataset> split_train_val(const Dataset& data, const FoldSplit& split);

/// CSV rows of (label, features...).
std::string dataset_to_csv(const Dataset& data);

}  // namespace csrb
