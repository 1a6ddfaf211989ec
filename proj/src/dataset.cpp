#include "csrb/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace csrb {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off,
                   const std::string& what) {
  if (off + 4 > b.size()) throw DataError("truncated file while reading " + what);
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

}  // namespace

void Dataset::validate() const {
  if (xs.size() != ys.size()) throw DataError("example/label count mismatch");
  for (const Tensor& x : xs) {
    if (x.size() != d) throw DataError("example dimension mismatch");
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!(x[i] >= 0.0 && x[i] <= 1.0)) throw DataError("feature outside [0,1]");
  }
  for (std::size_t y : ys)
    if (y >= m) throw DataError("label out of range");
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(m, 0);
  for (std::size_t y : ys) counts[y]++;
  return counts;
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  std::vector<unsigned char> img = read_file(images_path);
  std::vector<unsigned char> lab = read_file(labels_path);

  if (be32(img, 0, "image magic") != 0x00000803u)
    throw DataError("wrong magic in " + images_path + " (expected IDX3 images)");
  if (be32(lab, 0, "label magic") != 0x00000801u)
    throw DataError("wrong magic in " + labels_path + " (expected IDX1 labels)");

  std::uint32_t n = be32(img, 4, "image count");
  std::uint32_t rows = be32(img, 8, "rows");
  std::uint32_t cols = be32(img, 12, "cols");
  std::uint32_t nl = be32(lab, 4, "label count");
  if (n != nl)
    throw DataError("image/label count mismatch: " + std::to_string(n) + " vs " +
                    std::to_string(nl));
  std::size_t dim = std::size_t{rows} * cols;
  if (img.size() != 16 + std::size_t{n} * dim)
    throw DataError("truncated image payload in " + images_path);
  if (lab.size() != 8 + std::size_t{n})
    throw DataError("truncated label payload in " + labels_path);

  Dataset ds;
  ds.d = dim;
  ds.m = 10;
  ds.provenance = "mnist-idx:" + images_path;
  ds.xs.reserve(n);
  ds.ys.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor x({dim});
    const unsigned char* px = img.data() + 16 + i * dim;
    for (std::size_t p = 0; p < dim; ++p) x[p] = static_cast<double>(px[p]) / 255.0;
    ds.xs.push_back(std::move(x));
    unsigned char y = lab[8 + i];
    if (y >= 10) throw DataError("label byte " + std::to_string(y) + " out of range");
    ds.ys.push_back(y);
  }
  return ds;
}

Dataset load_cifar10(const std::vector<std::string>& batch_paths) {
  constexpr std::size_t kRecord = 3073, kPixels = 3072;
  Dataset ds;
  ds.d = kPixels;
  ds.m = 10;
  ds.provenance = "cifar10-bin";
  for (const std::string& path : batch_paths) {
    std::vector<unsigned char> bytes = read_file(path);
    if (bytes.empty() || bytes.size() % kRecord != 0)
      throw DataError("file size not a multiple of 3073: " + path);
    std::size_t n = bytes.size() / kRecord;
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned char* rec = bytes.data() + i * kRecord;
      if (rec[0] >= 10) throw DataError("label byte out of range in " + path);
      Tensor x({kPixels});
      for (std::size_t p = 0; p < kPixels; ++p)
        x[p] = static_cast<double>(rec[1 + p]) / 255.0;
      ds.xs.push_back(std::move(x));
      ds.ys.push_back(rec[0]);
    }
  }
  if (ds.xs.empty()) throw DataError("no CIFAR10 batches given");
  return ds;
}

Dataset synth_blobs(Rng& rng, std::size_t m, std::size_t d, std::size_t per_class,
                    double spread) {
  if (m < 2 || d < 1) throw DataError("synth_blobs: need m >= 2, d >= 1");
  // smallest lattice arity k with k^d >= m
  std::size_t k = 2;
  while (true) {
    double cells = std::pow(static_cast<double>(k), static_cast<double>(d));
    if (cells >= static_cast<double>(m)) break;
    ++k;
  }
  Dataset ds;
  ds.m = m;
  ds.d = d;
  ds.provenance = "synth-blobs";
  ds.xs.reserve(m * per_class);
  ds.ys.reserve(m * per_class);
  for (std::size_t c = 0; c < m; ++c) {
    Tensor mean({d});
    std::size_t rem = c;
    for (std::size_t i = 0; i < d; ++i) {
      std::size_t digit = rem % k;
      rem /= k;
      mean[i] = 0.2 + 0.6 * static_cast<double>(digit) / static_cast<double>(k - 1);
    }
    for (std::size_t s = 0; s < per_class; ++s) {
      Tensor x({d});
      for (std::size_t i = 0; i < d; ++i)
        x[i] = std::clamp(mean[i] + spread * rng.normal(), 0.0, 1.0);
      ds.xs.push_back(std::move(x));
      ds.ys.push_back(c);
    }
  }
  return ds;
}

FoldSplit split_folds(std::size_t n, std::size_t k, Rng& rng, std::size_t val_fold) {
  if (k < 2) throw DataError("split_folds: k must be >= 2");
  if (n < k) throw DataError("split_folds: dataset smaller than fold count");
  if (val_fold >= k) throw DataError("split_folds: validation fold out of range");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  FoldSplit split;
  split.k = k;
  split.val_fold = val_fold;
  split.fold_of.assign(n, 0);
  for (std::size_t f = 0; f < k; ++f) {
    std::size_t lo = n * f / k, hi = n * (f + 1) / k;
    for (std::size_t p = lo; p < hi; ++p) split.fold_of[order[p]] = f;
  }
  return split;
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.m = data.m;
  out.d = data.d;
  out.provenance = data.provenance;
  out.xs.reserve(idx.size());
  out.ys.reserve(idx.size());
  for (std::size_t i : idx) {
    out.xs.push_back(data.xs[i]);
    out.ys.push_back(data.ys[i]);
  }
  return out;
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& data, const FoldSplit& split) {
  std::vector<std::size_t> tr, va;
  for (std::size_t i = 0; i < data.size(); ++i)
    (split.fold_of[i] == split.val_fold ? va : tr).push_back(i);
  return {subset(data, tr), subset(data, va)};
}

std::string dataset_to_csv(const Dataset& data) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << data.ys[i];
    for (std::size_t p = 0; p < data.d; ++p) os << ',' << data.xs[i][p];
    os << '\n';
  }
  return os.str();
}

}  // namespace csrb
