#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "leap/events.hpp"
#include "leap/prompting.hpp"
#include "leap/tensor.hpp"

namespace leap {

/// Fixed-dimension float vectors keyed by quintuple uid. Insertion order is
/// preserved and is the order written to disk.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::uint32_t dim, std::string provenance = {});

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return uids_.size(); }
  const std::string& provenance() const { return provenance_; }
  void set_provenance(std::string p) { provenance_ = std::move(p); }

  /// Throws std::invalid_argument on a dimension mismatch, non-finite entry or
  /// duplicate uid.
  void add(Uid uid, std::span<const float> vector);
  void add(Uid uid, std::span<const double> vector);

  bool contains(Uid uid) const { return index_.contains(uid); }
  /// nullopt when absent.
  std::optional<std::span<const float>> find(Uid uid) const;
  /// Throws std::out_of_range naming the uid when absent.
  std::span<const float> at(Uid uid) const;

  const std::vector<Uid>& uids() const { return uids_; }

  /// Dimension and records (in order); provenance is not part of the identity.
  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b);

 private:
  std::uint32_t dim_;
  std::string provenance_;
  std::vector<Uid> uids_;
  std::vector<float> values_;
  std::unordered_map<Uid, std::size_t> index_;
};

class StoreFormatError : public std::runtime_error {
 public:
  enum class Code { bad_magic, version_mismatch, truncated, duplicate_uid, bad_header, trailing_data, non_finite };
  StoreFormatError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

inline constexpr std::uint32_t kEmbeddingStoreVersion = 1;
/// Readers reject headers declaring more dimensions than this.
inline constexpr std::uint32_t kMaxStoreDim = 1u << 20;

/// Little-endian: "LEAPEMB1", u32 version, u32 dim, u64 count, then count
/// records of (u64 uid, dim × f32).
void write_store(std::ostream& out, const EmbeddingStore& store);
EmbeddingStore read_store(std::istream& in);

void write_store_file(const std::string& path, const EmbeddingStore& store);
EmbeddingStore read_store_file(const std::string& path);

/// Column-wise mean of an n×d matrix. Throws std::invalid_argument for n = 0.
std::vector<double> mean_pool(const Tensor& tokens);

/// Deterministic stand-in for a frozen sentence encoder: a keyed hash of
/// (prompt, seed) expanded into `dim` coordinates and normalised to unit length.
std::vector<double> test_encoder(std::string_view prompt, std::uint32_t dim, std::uint64_t seed);

/// What gets encoded for each quintuple.
enum class EmbedInput { simple_prompt, text };

std::optional<EmbedInput> embed_input_from_string(std::string_view name);
std::string_view to_string(EmbedInput input);

struct EncoderProvider {
  std::uint32_t dim = 64;
  std::uint64_t seed = 0;
  EmbedInput input = EmbedInput::simple_prompt;
};

struct StoreProvider {
  const EmbeddingStore* store = nullptr;
};

struct EmbedContext {
  const Vocabulary* vocab = nullptr;
  const Calendar* calendar = nullptr;
  PromptConfig prompt;
  unsigned threads = 1;
};

/// One record per quintuple. Store mode copies vectors and throws
/// std::out_of_range naming the first missing uid; encoder mode renders and
/// encodes each quintuple.
EmbeddingStore embed_all(std::span<const Quintuple> data, const StoreProvider& provider);
EmbeddingStore embed_all(std::span<const Quintuple> data, const EncoderProvider& provider,
                         const EmbedContext& ctx);

}  // namespace leap
