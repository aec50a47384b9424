#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "leap/embedding.hpp"
#include "leap/hashing.hpp"
#include "oracles.hpp"

using namespace leap;

namespace {

EmbeddingStore three_records() {
  EmbeddingStore s(4, "unit");
  s.add(10, std::vector<double>{1, 2, 3, 4});
  s.add(3, std::vector<double>{-0.5, 0.25, 0, 1e-3});
  s.add(77, std::vector<double>{9, 8, 7, 6});
  return s;
}

std::string bytes_of(const EmbeddingStore& s) {
  std::ostringstream out;
  write_store(out, s);
  return out.str();
}

StoreFormatError::Code read_error(const std::string& bytes) {
  std::istringstream in(bytes);
  try {
    read_store(in);
  } catch (const StoreFormatError& e) {
    return e.code();
  }
  ADD_FAILURE() << "stream accepted";
  return StoreFormatError::Code::bad_header;
}

template <typename T>
void put(std::string& bytes, std::size_t at, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[at + i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i], na += a[i] * a[i], nb += b[i] * b[i];
  return d / std::sqrt(na * nb);
}

}  // namespace

TEST(MeanPool, Examples) {
  EXPECT_EQ(mean_pool(Tensor::from_rows({{1, 3}, {3, 5}})), (std::vector<double>{2, 4}));
  EXPECT_EQ(mean_pool(Tensor::from_rows({{0.5, -1, 7}})), (std::vector<double>{0.5, -1, 7}));
  EXPECT_THROW(mean_pool(Tensor::matrix(0, 3)), std::invalid_argument);
}

TEST(MeanPool, PermutationAndLinearity) {
  std::mt19937_64 rng(1);
  const auto x = leap::testing::random_tensor({5, 3}, rng), y = leap::testing::random_tensor({5, 3}, rng);
  Tensor px = Tensor::matrix(5, 3), comb = Tensor::matrix(5, 3);
  const std::size_t perm[] = {4, 2, 0, 3, 1};
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) px(r, c) = x(perm[r], c), comb(r, c) = 2.5 * x(r, c) - 1.5 * y(r, c);
  const auto mx = mean_pool(x), my = mean_pool(y), mp = mean_pool(px), mc = mean_pool(comb);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(mp[c], mx[c], 1e-14);
    EXPECT_NEAR(mc[c], 2.5 * mx[c] - 1.5 * my[c], 1e-12);
  }
}

TEST(TestEncoder, DeterministicAndUnitNorm) {
  const auto a = test_encoder("Subject: A;", 64, 9), b = test_encoder("Subject: A;", 64, 9);
  EXPECT_EQ(a, b);
  double n = 0;
  for (double v : a) n += v * v;
  EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
  EXPECT_NE(test_encoder("Subject: A;", 64, 10), a);
}

TEST(TestEncoder, OneByteChangeDecorrelates) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> ch(32, 126);
  for (int trial = 0; trial < 1000; ++trial) {
    std::string p(1 + rng() % 60, ' ');
    for (auto& c : p) c = static_cast<char>(ch(rng));
    auto q = p;
    auto& c = q[rng() % q.size()];
    c = static_cast<char>(c == '~' ? ' ' : c + 1);
    EXPECT_LT(cosine(test_encoder(p, 64, 0), test_encoder(q, 64, 0)), 0.9) << p;
  }
}

TEST(Store, AddAndLookup) {
  auto s = three_records();
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s.uids(), (std::vector<Uid>{10, 3, 77}));
  EXPECT_FLOAT_EQ(s.at(3)[1], 0.25f);
  EXPECT_FALSE(s.find(4));
  EXPECT_THROW(s.at(4), std::out_of_range);
  EXPECT_THROW(s.add(10, std::vector<double>{0, 0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(s.add(11, std::vector<double>{0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(s.add(12, std::vector<double>{0, 0, 0, INFINITY}), std::invalid_argument);
  EXPECT_THROW(EmbeddingStore(0), std::invalid_argument);
}

TEST(Store, RoundTripSmall) {
  const auto s = three_records();
  const auto bytes = bytes_of(s);
  EXPECT_EQ(bytes.substr(0, 8), "LEAPEMB1");
  EXPECT_EQ(bytes.size(), 24u + 3 * (8 + 16));
  std::istringstream in(bytes);
  EXPECT_EQ(read_store(in), s);
}

TEST(Store, LittleEndianLayout) {
  EmbeddingStore s(1);
  s.add(0x0102030405060708ULL, std::vector<float>{1.0f});
  const auto b = bytes_of(s);
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 1u);   // version
  EXPECT_EQ(static_cast<unsigned char>(b[12]), 1u);  // dim
  EXPECT_EQ(static_cast<unsigned char>(b[16]), 1u);  // count
  EXPECT_EQ(static_cast<unsigned char>(b[24]), 0x08u);
  EXPECT_EQ(static_cast<unsigned char>(b[31]), 0x01u);
  EXPECT_EQ(b.substr(32), std::string("\x00\x00\x80\x3f", 4));
}

TEST(Store, RoundTripTenThousand) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0, 10);
  EmbeddingStore s(16, "random");
  std::vector<float> v(16);
  for (Uid uid = 0; uid < 10000; ++uid) {
    for (auto& x : v) x = n(rng);
    s.add(uid * 7919 + 13, std::span<const float>(v));
  }
  const auto bytes = bytes_of(s);
  std::istringstream in(bytes);
  const auto back = read_store(in);
  EXPECT_EQ(back, s);
  EXPECT_EQ(fnv1a64(bytes_of(back)), fnv1a64(bytes));
}

TEST(Store, ErrorCodes) {
  using Code = StoreFormatError::Code;
  const auto good = bytes_of(three_records());

  auto magic = good;
  magic[3] = 'X';
  EXPECT_EQ(read_error(magic), Code::bad_magic);

  auto version = good;
  put<std::uint32_t>(version, 8, 2);
  EXPECT_EQ(read_error(version), Code::version_mismatch);

  EXPECT_EQ(read_error(good.substr(0, good.size() - 3)), Code::truncated);
  EXPECT_EQ(read_error(good.substr(0, 12)), Code::truncated);
  EXPECT_EQ(read_error(good + "x"), Code::trailing_data);

  auto dup = good;
  put<std::uint64_t>(dup, 24 + 24, 10);
  EXPECT_EQ(read_error(dup), Code::duplicate_uid);

  auto zero_dim = good;
  put<std::uint32_t>(zero_dim, 12, 0);
  EXPECT_EQ(read_error(zero_dim), Code::bad_header);

  auto huge_dim = good;
  put<std::uint32_t>(huge_dim, 12, 0xffffffffu);
  EXPECT_EQ(read_error(huge_dim), Code::bad_header);

  auto nan = good;
  put<std::uint32_t>(nan, 32, 0x7fc00000u);
  EXPECT_EQ(read_error(nan), Code::non_finite);
}

TEST(Store, AnyHeaderMutationRejected) {
  const auto good = bytes_of(three_records());
  for (std::size_t i = 0; i < 24; ++i) {
    auto bad = good;
    bad[i] = static_cast<char>(bad[i] ^ 0x01);
    std::istringstream in(bad);
    EXPECT_THROW(read_store(in), StoreFormatError) << "byte " << i;
  }
}

TEST(Store, FileRoundTrip) {
  const auto path = ::testing::TempDir() + "/leap_store_roundtrip.bin";
  write_store_file(path, three_records());
  EXPECT_EQ(read_store_file(path), three_records());
  EXPECT_THROW(read_store_file(path + ".missing"), std::runtime_error);
}

TEST(EmbedAll, EncoderMode) {
  const auto d = leap::testing::functional_dataset(1, 5);
  EmbedContext ctx{&d.vocab, &d.calendar, {}, 1};
  const auto s = embed_all(d.events, EncoderProvider{16, 4, EmbedInput::simple_prompt}, ctx);
  EXPECT_EQ(s.size(), 5u);
  EXPECT_EQ(s.dim(), 16u);
  EXPECT_EQ(bytes_of(s), bytes_of(embed_all(d.events, EncoderProvider{16, 4, EmbedInput::simple_prompt}, ctx)));
  ctx.threads = 4;
  EXPECT_EQ(bytes_of(s), bytes_of(embed_all(d.events, EncoderProvider{16, 4, EmbedInput::simple_prompt}, ctx)));
  const auto first = test_encoder(render_simple_prompt(d.events[0], d.vocab, d.calendar), 16, 4);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_FLOAT_EQ(s.at(0)[i], static_cast<float>(first[i]));
}

TEST(EmbedAll, StoreModeMissingUid) {
  const auto d = leap::testing::functional_dataset(1, 5);
  EmbeddingStore partial(2);
  for (Uid u : {0, 1, 3, 4}) partial.add(u, std::vector<double>{1, 2});
  try {
    embed_all(d.events, StoreProvider{&partial});
    FAIL() << "expected a missing uid error";
  } catch (const std::out_of_range& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  partial.add(2, std::vector<double>{3, 4});
  EXPECT_EQ(embed_all(d.events, StoreProvider{&partial}).size(), 5u);
}
