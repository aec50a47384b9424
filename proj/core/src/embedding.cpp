#include "leap/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <thread>

#include "binary_io.hpp"
#include "leap/hashing.hpp"

namespace leap {

namespace {

constexpr char kStoreMagic[8] = {'L', 'E', 'A', 'P', 'E', 'M', 'B', '1'};

std::string uid_text(Uid uid) { return std::to_string(uid); }

}  // namespace

EmbeddingStore::EmbeddingStore(std::uint32_t dim, std::string provenance)
    : dim_(dim), provenance_(std::move(provenance)) {
  if (dim_ == 0) throw std::invalid_argument("EmbeddingStore: dim must be positive");
}

void EmbeddingStore::add(Uid uid, std::span<const float> vector) {
  if (vector.size() != dim_) {
    throw std::invalid_argument("EmbeddingStore: uid " + uid_text(uid) + " has dim " +
                                std::to_string(vector.size()) + ", store dim is " + std::to_string(dim_));
  }
  if (!std::all_of(vector.begin(), vector.end(), [](float v) { return std::isfinite(v); })) {
    throw std::invalid_argument("EmbeddingStore: uid " + uid_text(uid) + " has a non-finite entry");
  }
  if (!index_.emplace(uid, uids_.size()).second) {
    throw std::invalid_argument("EmbeddingStore: duplicate uid " + uid_text(uid));
  }
  uids_.push_back(uid);
  values_.insert(values_.end(), vector.begin(), vector.end());
}

void EmbeddingStore::add(Uid uid, std::span<const double> vector) {
  std::vector<float> narrowed(vector.begin(), vector.end());
  add(uid, std::span<const float>(narrowed));
}

std::optional<std::span<const float>> EmbeddingStore::find(Uid uid) const {
  const auto it = index_.find(uid);
  if (it == index_.end()) return std::nullopt;
  return std::span<const float>(values_.data() + it->second * dim_, dim_);
}

std::span<const float> EmbeddingStore::at(Uid uid) const {
  if (auto v = find(uid)) return *v;
  throw std::out_of_range("embedding store has no record for uid " + uid_text(uid));
}

bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
  if (a.dim_ != b.dim_ || a.uids_ != b.uids_ || a.values_.size() != b.values_.size()) return false;
  // bitwise: -0.0 and 0.0 differ
  return std::equal(a.values_.begin(), a.values_.end(), b.values_.begin(),
                    [](float x, float y) { return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y); });
}

void write_store(std::ostream& out, const EmbeddingStore& store) {
  out.write(kStoreMagic, sizeof kStoreMagic);
  detail::write_le<std::uint32_t>(out, kEmbeddingStoreVersion);
  detail::write_le<std::uint32_t>(out, store.dim());
  detail::write_le<std::uint64_t>(out, store.size());
  for (Uid uid : store.uids()) {
    detail::write_le<std::uint64_t>(out, uid);
    for (float v : store.at(uid)) detail::write_le<float>(out, v);
  }
  if (!out) throw std::runtime_error("write_store: write failed");
}

EmbeddingStore read_store(std::istream& in) {
  using Code = StoreFormatError::Code;
  char magic[8];
  if (!in.read(magic, sizeof magic)) throw StoreFormatError(Code::truncated, "embedding store: truncated header");
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kStoreMagic))) {
    throw StoreFormatError(Code::bad_magic, "embedding store: bad magic bytes");
  }
  std::uint32_t version = 0, dim = 0;
  std::uint64_t count = 0;
  if (!detail::read_le(in, version)) throw StoreFormatError(Code::truncated, "embedding store: truncated header");
  if (version != kEmbeddingStoreVersion) {
    throw StoreFormatError(Code::version_mismatch,
                           "embedding store: version " + std::to_string(version) + " is not supported");
  }
  if (!detail::read_le(in, dim) || !detail::read_le(in, count)) {
    throw StoreFormatError(Code::truncated, "embedding store: truncated header");
  }
  if (dim == 0) throw StoreFormatError(Code::bad_header, "embedding store: dim is zero");
  if (dim > kMaxStoreDim) {
    throw StoreFormatError(Code::bad_header, "embedding store: dim " + std::to_string(dim) + " exceeds limit");
  }

  EmbeddingStore store(dim);
  std::vector<float> vec(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t uid = 0;
    if (!detail::read_le(in, uid)) {
      throw StoreFormatError(Code::truncated, "embedding store: truncated at record " + std::to_string(i));
    }
    for (auto& v : vec) {
      if (!detail::read_le(in, v)) {
        throw StoreFormatError(Code::truncated, "embedding store: truncated at record " + std::to_string(i));
      }
    }
    if (store.contains(uid)) throw StoreFormatError(Code::duplicate_uid, "embedding store: duplicate uid " + uid_text(uid));
    if (!std::all_of(vec.begin(), vec.end(), [](float v) { return std::isfinite(v); })) {
      throw StoreFormatError(Code::non_finite, "embedding store: non-finite value for uid " + uid_text(uid));
    }
    store.add(uid, std::span<const float>(vec));
  }
  if (!detail::at_eof(in)) throw StoreFormatError(Code::trailing_data, "embedding store: trailing bytes after records");
  return store;
}

void write_store_file(const std::string& path, const EmbeddingStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_store(out, store);
}

EmbeddingStore read_store_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_store(in);
}

std::vector<double> mean_pool(const Tensor& tokens) {
  if (tokens.rows() == 0 || tokens.empty()) throw std::invalid_argument("mean_pool: no tokens");
  std::vector<double> out(tokens.cols(), 0.0);
  for (std::size_t i = 0; i < tokens.rows(); ++i) {
    for (std::size_t j = 0; j < tokens.cols(); ++j) out[j] += tokens(i, j);
  }
  for (auto& v : out) v /= static_cast<double>(tokens.rows());
  return out;
}

std::vector<double> test_encoder(std::string_view prompt, std::uint32_t dim, std::uint64_t seed) {
  if (dim == 0) throw std::invalid_argument("test_encoder: dim must be positive");
  std::uint64_t state = fnv1a64(prompt, 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL));
  state ^= splitmix64(state);
  std::vector<double> out(dim);
  double sq = 0.0;
  for (auto& v : out) {
    // 53 random bits mapped to [-1, 1)
    v = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
    sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm == 0.0) {
    out[0] = 1.0;
    return out;
  }
  for (auto& v : out) v /= norm;
  return out;
}

std::optional<EmbedInput> embed_input_from_string(std::string_view name) {
  if (name == "simple" || name == "simple_prompt") return EmbedInput::simple_prompt;
  if (name == "text") return EmbedInput::text;
  return std::nullopt;
}

std::string_view to_string(EmbedInput input) {
  return input == EmbedInput::simple_prompt ? "simple_prompt" : "text";
}

EmbeddingStore embed_all(std::span<const Quintuple> data, const StoreProvider& provider) {
  if (!provider.store) throw std::invalid_argument("embed_all: store provider has no store");
  EmbeddingStore out(provider.store->dim(), provider.store->provenance());
  for (const auto& q : data) out.add(q.uid, provider.store->at(q.uid));
  return out;
}

EmbeddingStore embed_all(std::span<const Quintuple> data, const EncoderProvider& provider,
                         const EmbedContext& ctx) {
  if (provider.input == EmbedInput::simple_prompt && (!ctx.vocab || !ctx.calendar)) {
    throw std::invalid_argument("embed_all: simple prompts need a vocabulary and calendar");
  }
  std::vector<std::vector<double>> vectors(data.size());
  auto encode_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& q = data[i];
      const std::string prompt = provider.input == EmbedInput::simple_prompt
                                     ? render_simple_prompt(q, *ctx.vocab, *ctx.calendar, ctx.prompt)
                                     : q.text;
      vectors[i] = test_encoder(prompt, provider.dim, provider.seed);
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(ctx.threads, static_cast<unsigned>(data.size())));
  if (threads <= 1) {
    encode_range(0, data.size());
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (data.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(data.size(), begin + chunk);
      if (begin < end) workers.emplace_back(encode_range, begin, end);
    }
  }

  EmbeddingStore out(provider.dim, "test_encoder(" + std::string(to_string(provider.input)) +
                                       ",seed=" + std::to_string(provider.seed) + ")");
  for (std::size_t i = 0; i < data.size(); ++i) out.add(data[i].uid, std::span<const double>(vectors[i]));
  return out;
}

}  // namespace leap
