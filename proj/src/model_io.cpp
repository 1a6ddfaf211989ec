#include "csrb/model_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace csrb {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::array<char, 4> kMagic = {'C', 'S', 'R', 'B'};

static_assert(std::endian::native == std::endian::little,
              "model format assumes little-endian host");

const std::array<std::uint32_t, 256>& crc_table() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}

template <typename T>
void put(std::vector<unsigned char>& buf, T v) {
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.insert(buf.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  Reader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > n_)
      throw ModelIoError(ModelIoError::Kind::Malformed, "model file truncated");
    T v;
    std::memcpy(&v, p_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t n, std::uint32_t seed) {
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i)
    c = crc_table()[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void save_model(const Network& net, const ModelMeta& meta, const std::string& path) {
  net.validate();
  std::vector<unsigned char> header;
  header.insert(header.end(), kMagic.begin(), kMagic.end());
  put(header, kVersion);
  put(header, static_cast<std::uint32_t>(net.layers.size()));
  std::uint64_t param_count = 0;
  for (const AffineLayer& l : net.layers) {
    put(header, static_cast<std::uint32_t>(l.W.rows()));
    put(header, static_cast<std::uint32_t>(l.W.cols()));
    param_count += l.W.size() + l.b.size();
  }
  put(header, meta.epsilon);
  put(header, meta.alpha);
  put(header, meta.seed);
  put(header, param_count);

  std::vector<unsigned char> payload;
  payload.reserve(param_count * sizeof(double));
  for (const AffineLayer& l : net.layers) {
    for (std::size_t i = 0; i < l.W.size(); ++i) put(payload, l.W[i]);
    for (std::size_t i = 0; i < l.b.size(); ++i) put(payload, l.b[i]);
  }

  std::uint32_t crc = crc32(header.data(), header.size());
  crc = crc32(payload.data(), payload.size(), crc);

  put(header, crc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ModelIoError(ModelIoError::Kind::Io, "cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(header.data()),
            static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw ModelIoError(ModelIoError::Kind::Io, "write failed: " + path);
}

Network load_model(const std::string& path, ModelMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelIoError(ModelIoError::Kind::Io, "cannot open: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  Reader r(bytes.data(), bytes.size());

  std::array<char, 4> magic{};
  for (char& c : magic) c = static_cast<char>(r.get<unsigned char>());
  if (magic != kMagic)
    throw ModelIoError(ModelIoError::Kind::Malformed, "bad magic; not a model file");
  std::uint32_t version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw ModelIoError(ModelIoError::Kind::VersionMismatch,
                       "unsupported model version " + std::to_string(version));
  std::uint32_t n_layers = r.get<std::uint32_t>();
  if (n_layers == 0 || n_layers > 1024)
    throw ModelIoError(ModelIoError::Kind::Malformed, "implausible layer count");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(n_layers);
  std::uint64_t expect_params = 0;
  for (auto& [rows, cols] : shapes) {
    rows = r.get<std::uint32_t>();
    cols = r.get<std::uint32_t>();
    expect_params += std::uint64_t{rows} * cols + rows;
  }
  ModelMeta m;
  m.epsilon = r.get<double>();
  m.alpha = r.get<double>();
  m.seed = r.get<std::uint64_t>();
  std::uint64_t param_count = r.get<std::uint64_t>();
  if (param_count != expect_params)
    throw ModelIoError(ModelIoError::Kind::Malformed, "parameter count disagrees with shapes");
  std::size_t header_end = r.pos();
  std::uint32_t stored_crc = r.get<std::uint32_t>();
  if (r.remaining() != param_count * sizeof(double))
    throw ModelIoError(ModelIoError::Kind::Malformed, "model file truncated");

  std::uint32_t crc = crc32(bytes.data(), header_end);
  crc = crc32(bytes.data() + r.pos(), r.remaining(), crc);
  if (crc != stored_crc)
    throw ModelIoError(ModelIoError::Kind::ChecksumMismatch, "checksum mismatch");

  Network net;
  for (auto& [rows, cols] : shapes) {
    AffineLayer l{Tensor::matrix(rows, cols), Tensor({rows})};
    for (std::size_t i = 0; i < l.W.size(); ++i) l.W[i] = r.get<double>();
    for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] = r.get<double>();
    net.layers.push_back(std::move(l));
  }
  net.validate();
  if (meta) *meta = m;
  return net;
}

}  // namespace csrb
