#include <doctest.h>

#include <cmath>

#include "mli/tokenizer.hpp"

using namespace mli;

TEST_CASE("sample line tokenizes to the expected ids and payload slots") {
  auto seq = tok::tokenize("x ~ gaussian(0, 1) -> <mask>\n");
  // <bos> v0 ~ gaussian ( <num> , <num> ) -> <mask> <nl>
  REQUIRE(seq.length() == 12);
  CHECK(seq.ids[0] == tok::kBos);
  CHECK(seq.ids[1] == tok::var_token(0));
  CHECK(tok::token_name(seq.ids[2]) == "~");
  CHECK(tok::token_name(seq.ids[3]) == "gaussian");
  CHECK(seq.ids[5] == tok::kNum);
  CHECK(seq.payloads[5] == 0.0);
  CHECK(seq.ids[7] == tok::kNum);
  CHECK(seq.payloads[7] == 1.0);
  CHECK(seq.ids[10] == tok::kMask);
  CHECK(std::isnan(seq.payloads[10]));
  REQUIRE(seq.lines.size() == 1);
  CHECK(seq.lines[0].target == "x");
  CHECK(seq.lines[0].annotation_pos == 10);
}

TEST_CASE("tokenize/detokenize is the identity on canonical text") {
  std::string canon =
      "mu1 ~ uniform(-5, 5) -> 0.5\n"
      "sigma1 ~ uniform(0, 20) -> 3\n"
      "z1 ~ gaussian(mu1, sigma1) -> 1.2\n"
      "c1 ~ uniform(-3, 3) -> <mask>\n"
      "z2 = z1 * c1 -> -0.6\n"
      "m1 = if (z1 > 0) z1 else z2 -> 1.2\n"
      "r = rosenbrock(z1, z2) -> 260.92\n";
  auto seq = tok::tokenize(canon);
  CHECK(tok::detokenize(seq) == canon);
}

TEST_CASE("plate text round-trips with index tags") {
  std::string canon =
      "ability ~ gaussian(0, 1) -> <mask>\n"
      "plate(30):\n"
      "  d[3] ~ gaussian(0, 1) -> 0.42\n"
      "  r[3] ~ bernoulli(sigmoid(ability + (d[3] * -1))) -> 1\n"
      "  d[7] ~ gaussian(0, 1) -> -0.11\n"
      "  r[7] ~ bernoulli(sigmoid(ability + (d[7] * -1))) -> 0\n";
  auto seq = tok::tokenize(canon);
  CHECK(tok::detokenize(seq) == canon);

  // The plate header total is a <num> payload, indices are tags.
  REQUIRE(seq.lines.size() == 6);
  CHECK(seq.lines[1].target.empty());
  CHECK(seq.lines[1].annotation_pos == -1);
  CHECK(seq.lines[2].target == "d[3]");
  CHECK(seq.lines[5].target == "r[7]");
  bool saw_index = false;
  for (int id : seq.ids) saw_index = saw_index || tok::is_index_token(id);
  CHECK(saw_index);
}

TEST_CASE("variable pool assigns slots by declaration order") {
  auto seq = tok::tokenize(
      "b ~ gaussian(0, 1) -> 1\n"
      "a = b * 2 -> 2\n"
      "c = a + b -> 3\n");
  CHECK(seq.var_pool == std::vector<std::string>{"b", "a", "c"});
  CHECK(seq.ids[1] == tok::var_token(0));
}

TEST_CASE("pool exhaustion is an error") {
  std::string many;
  for (int i = 0; i < 65; ++i)
    many += "x" + std::to_string(i) + " ~ gaussian(0, 1) -> 0\n";
  CHECK_THROWS_AS(tok::tokenize(many), tok::TokenizeError);
}

TEST_CASE("over-length sequences are an error") {
  std::string long_prog;
  for (int i = 0; i < 20; ++i)
    long_prog += "x" + std::to_string(i) + " ~ gaussian(0, 1) -> 0.5\n";
  CHECK_THROWS_AS(tok::tokenize(long_prog, 64), tok::TokenizeError);
  CHECK_NOTHROW(tok::tokenize(long_prog, tok::kDefaultMaxLen));
}

TEST_CASE("maskable positions exclude specials and numbers") {
  auto seq = tok::tokenize("x ~ gaussian(0, 1) -> <mask>\n");
  auto pos = tok::maskable_positions(seq);
  for (int p : pos) {
    CHECK(seq.ids[p] != tok::kBos);
    CHECK(seq.ids[p] != tok::kNum);
    CHECK(seq.ids[p] != tok::kMask);
    CHECK(seq.ids[p] != tok::kPad);
  }
  // var, ~, gaussian, (, ,, ), ->, <nl>
  CHECK(pos.size() == 8);
}

TEST_CASE("vocabulary is stable") {
  CHECK(tok::vocab_size() == 28 + 64 + 64);
  CHECK(tok::token_name(tok::kPad) == "<pad>");
  CHECK(tok::token_name(tok::kNum) == "<num>");
  CHECK(tok::token_name(tok::var_token(0)) == "v0");
}
