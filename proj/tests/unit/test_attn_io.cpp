#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "halospan/attn_io.hpp"
#include "halospan/errors.hpp"
#include "halospan/util.hpp"
#include "support/fuzz.hpp"

using namespace halospan;

namespace {

AttentionDump minimal_dump() {
  AttentionDump d = make_empty_dump("m", 3, 1, 1, 1, false);
  auto r2 = d.row(0, 0, 2);
  r2[0] = 0.6f;
  r2[1] = 0.4f;
  auto r3 = d.row(0, 0, 3);
  r3[0] = 0.2f;
  r3[1] = 0.3f;
  r3[2] = 0.5f;
  d.tokens = {{"a", 0, 1}, {"b", 1, 2}};
  return d;
}

std::size_t metadata_end(const std::vector<std::byte>& bytes) {
  return 12 + load_u32(bytes.data() + 8);
}

}  // namespace

TEST_CASE("minimal dump payload is five f32 values") {
  const auto bytes = encode_dump(minimal_dump());
  CHECK(bytes.size() - metadata_end(bytes) == 20);
  CHECK(payload_bytes(3, 1, 1, 1, Precision::F32, false) == 20);
  CHECK(std::string(reinterpret_cast<const char*>(bytes.data()), 4) == "ASPD");
  CHECK(load_u32(bytes.data() + 4) == 1);
  CHECK(load_f32(bytes.data() + metadata_end(bytes)) == 0.6f);
}

TEST_CASE("write then read gives an equal dump") {
  AttentionDump d = minimal_dump();
  d.task = Task::Summarisation;
  d.gold_spans = std::vector<CharSpan>{{1, 2, HalluType::EConf}};
  d.output_text = "ab";
  std::stringstream buf;
  const std::size_t n = write_dump(d, buf);
  CHECK(n == buf.str().size());
  CHECK(read_dump(buf) == d);
}

TEST_CASE("encoding is byte-identical for identical input") {
  std::mt19937_64 rng(1);
  const auto d = testing::random_dump({9, 3, 2, 2, true}, rng);
  CHECK(encode_dump(d) == encode_dump(d));
  CHECK(encode_dump(decode_dump(encode_dump(d))) == encode_dump(d));
}

TEST_CASE("row sum violation is rejected by name") {
  AttentionDump d = minimal_dump();
  d.row(0, 0, 2)[1] = 0.5f;
  d.row(0, 0, 2)[0] = 0.6f;  // 1.1
  try {
    encode_dump(d);
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("attention row sum") != std::string::npos);
  }
}

TEST_CASE("bad magic and truncation") {
  auto bytes = encode_dump(minimal_dump());
  auto bad = bytes;
  for (int k = 0; k < 4; ++k) bad[k] = std::byte{'X'};
  CHECK_THROWS_AS(decode_dump(bad), FormatError);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 4);
  try {
    decode_dump(truncated);
    FAIL("expected length mismatch");
  } catch (const LengthMismatchError& e) {
    CHECK(e.expected() == 20);
    CHECK(e.actual() == 16);
  }

  auto future = bytes;
  future[4] = std::byte{9};
  CHECK_THROWS_AS(decode_dump(future), VersionError);
}

TEST_CASE("validate_dump reports specific violations") {
  CHECK(validate_dump(minimal_dump()).empty());

  AttentionDump low = minimal_dump();
  low.row(0, 0, 3)[2] = 0.3f;  // sums to 0.8
  const auto v = validate_dump(low);
  REQUIRE(v.size() == 1);
  CHECK(v[0].field == "attention row sum");
  CHECK(v[0].where.find("i=3") != std::string::npos);
  CHECK(v[0].observed == doctest::Approx(0.8).epsilon(1e-6));

  AttentionDump neg = minimal_dump();
  neg.value_norms.assign(3, 1.0f);
  neg.value_norms[1] = -0.5f;
  const auto vn = validate_dump(neg);
  REQUIRE(vn.size() == 1);
  CHECK(vn[0].where.find("j=2") != std::string::npos);
}

TEST_CASE("shape and token invariants") {
  AttentionDump d = minimal_dump();
  d.C = 3;
  CHECK_FALSE(validate_dump(d).empty());

  AttentionDump t = minimal_dump();
  t.tokens[1].char_start = 0;
  CHECK_FALSE(validate_dump(t).empty());

  AttentionDump few = minimal_dump();
  few.tokens.pop_back();
  CHECK_FALSE(validate_dump(few).empty());
}

TEST_CASE("payload size is predicted from the shape") {
  std::mt19937_64 rng(20);
  for (int k = 0; k < 20; ++k) {
    auto shape = testing::random_shape(rng, 12, 8);
    shape.norms = (k % 2) == 0;
    AttentionDump d = testing::random_dump(shape, rng);
    d.precision = (k % 3 == 0) ? Precision::F16 : Precision::F32;
    const auto bytes = encode_dump(d);
    CHECK(bytes.size() - metadata_end(bytes) ==
          payload_bytes(shape.S, shape.C, shape.L, shape.H, d.precision, shape.norms));
  }
}

TEST_CASE("f16 storage round-trips within quantisation") {
  std::mt19937_64 rng(3);
  AttentionDump d = testing::random_dump({12, 4, 2, 3, true}, rng);
  d.precision = Precision::F16;
  const AttentionDump back = decode_dump(encode_dump(d));
  REQUIRE(back.attention.size() == d.attention.size());
  for (std::size_t k = 0; k < d.attention.size(); ++k) {
    CHECK(std::abs(back.attention[k] - d.attention[k]) <= 1e-3f);
  }
  CHECK(validate_dump(back).empty());
  CHECK(encode_dump(back) == encode_dump(d));
}

TEST_CASE("failing sink is an I/O error") {
  std::stringstream bad;
  bad.setstate(std::ios::badbit);
  CHECK_THROWS_AS(write_dump(minimal_dump(), bad), IoError);
}
