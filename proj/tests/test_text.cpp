#include <doctest.h>

#include "mli/text.hpp"

using namespace mli;
using ast::Statement;

TEST_CASE("number formatting: 6 significant digits, no scientific notation") {
  CHECK(text::format_number(0.0) == "0");
  CHECK(text::format_number(-0.0) == "0");
  CHECK(text::format_number(1.0) == "1");
  CHECK(text::format_number(0.132) == "0.132");
  CHECK(text::format_number(-5.0) == "-5");
  CHECK(text::format_number(2.5) == "2.5");
  CHECK(text::format_number(123456789.0) == "123457000");
  CHECK(text::format_number(0.000123456789) == "0.000123457");
  CHECK(text::format_number(3.14159265) == "3.14159");
  CHECK(text::format_number(-3.14159265) == "-3.14159");
  CHECK(text::format_number(1e-30) == "0");
}

TEST_CASE("formatting round-trips through parse") {
  double vals[] = {0.132, -17.25, 4.0, 1234567.0, 0.5, -0.000321, 99999.9};
  for (double v : vals) {
    std::string s = text::format_number(v);
    double back = std::strtod(s.c_str(), nullptr);
    CHECK(text::format_number(back) == s);
  }
}

TEST_CASE("parse a sample line with annotation") {
  auto res = text::parse("x ~ gaussian(0, 1) -> 0.132\n");
  REQUIRE(res.program.statements.size() == 1);
  const Statement& s = res.program.statements[0];
  CHECK(s.kind == Statement::Kind::Sample);
  CHECK(s.target == "x");
  CHECK(s.dist == ast::DistFamily::Gaussian);
  CHECK(res.trace.values.at("x") == doctest::Approx(0.132));
  CHECK(res.trace.masked.empty());
}

TEST_CASE("parse a masked line") {
  auto res = text::parse("x ~ gaussian(0, 1) -> <mask>\n");
  CHECK(res.trace.masked.count("x") == 1);
  CHECK(res.trace.values.count("x") == 0);
}

TEST_CASE("missing op is a syntax error") {
  CHECK_THROWS_AS(text::parse("x gaussian(0,1)\n"), text::ParseError);
  try {
    text::parse("x gaussian(0,1)\n");
  } catch (const text::ParseError& e) {
    CHECK(e.line == 1);
    CHECK(std::string(e.what()).find("expected '~' or '='") != std::string::npos);
  }
}

TEST_CASE("unknown names and malformed numbers carry positions") {
  CHECK_THROWS_WITH_AS(text::parse("x ~ cauchy(0, 1) -> 1\n"),
                       doctest::Contains("unknown distribution"), text::ParseError);
  CHECK_THROWS_WITH_AS(text::parse("x = foo(1) -> 1\n"), doctest::Contains("unknown function"),
                       text::ParseError);
  CHECK_THROWS_AS(text::parse("x ~ gaussian(0, 1) -> 1.2.3\n"), text::ParseError);
  CHECK_THROWS_WITH_AS(text::parse("x = gaussian(0, 1) -> 1\n"),
                       doctest::Contains("used as a function"), text::ParseError);
}

TEST_CASE("canonical round trip on a full program") {
  std::string canon =
      "mu1 ~ uniform(-5, 5) -> 0.5\n"
      "sigma1 ~ uniform(0, 20) -> 3\n"
      "z1 ~ gaussian(mu1, sigma1) -> 1.2\n"
      "c1 ~ uniform(-3, 3) -> <mask>\n"
      "z2 = z1 * c1 -> -0.6\n"
      "t1 ~ gaussian(0, 100) -> 12.5\n"
      "m1 = if (t1 > 0) z1 else z2 -> 1.2\n"
      "b ~ bernoulli(0.5) -> 1\n"
      "z3 = if (b or b) 1 else 0 -> 1\n"
      "r = rosenbrock(z1, z2) -> 260.92\n"
      "s = sqrt(t1) -> 3.53553\n"
      "g = sigmoid(z2) -> 0.354344\n";
  auto res = text::parse(canon);
  CHECK(text::render(res.program, res.trace) == canon);

  // Rendering is deterministic.
  CHECK(text::render(res.program, res.trace) == text::render(res.program, res.trace));
}

TEST_CASE("plate text round trip with minibatch") {
  std::string canon =
      "x ~ gaussian(0, 1) -> 0.3\n"
      "plate(10):\n"
      "  d[1] ~ gaussian(x, 1) -> 0.25\n"
      "  d[4] ~ gaussian(x, 1) -> <mask>\n";
  auto res = text::parse(canon);
  REQUIRE(res.trace.minibatch.has_value());
  CHECK(res.trace.minibatch->total == 10);
  CHECK(res.trace.minibatch->indices == std::vector<int>{1, 4});
  CHECK(res.trace.masked.count("d[4]") == 1);
  CHECK(text::render(res.program, res.trace) == canon);
}

TEST_CASE("plate body with two templates and an indexed reference") {
  std::string canon =
      "ability ~ gaussian(0, 1) -> <mask>\n"
      "plate(30):\n"
      "  d[3] ~ gaussian(0, 1) -> 0.42\n"
      "  r[3] ~ bernoulli(sigmoid(ability + (d[3] * -1))) -> 1\n"
      "  d[7] ~ gaussian(0, 1) -> -0.11\n"
      "  r[7] ~ bernoulli(sigmoid(ability + (d[7] * -1))) -> 0\n";
  auto res = text::parse(canon);
  CHECK(ast::validate(res.program).empty());
  const Statement* plate = res.program.plate();
  REQUIRE(plate != nullptr);
  CHECK(plate->body.size() == 2);
  CHECK(res.program.statements.size() == 2);
  CHECK(text::render(res.program, res.trace) == canon);
}

TEST_CASE("inconsistent plate bodies are rejected") {
  CHECK_THROWS_WITH_AS(text::parse("plate(5):\n"
                                   "  d[1] ~ gaussian(0, 1) -> 0.2\n"
                                   "  d[2] ~ gaussian(0, 2) -> 0.1\n"),
                       doctest::Contains("inconsistent plate body"), text::ParseError);
  CHECK_THROWS_WITH_AS(text::parse("plate(5):\n"
                                   "  d[1] ~ gaussian(0, 1) -> 0.2\n"
                                   "  e[1] ~ gaussian(d[2], 1) -> 0.1\n"),
                       doctest::Contains("different plate iteration"), text::ParseError);
}

TEST_CASE("masking everything renders every line masked") {
  std::string src =
      "a ~ gaussian(0, 1) -> 0.1\n"
      "b = a * 2 -> 0.2\n";
  auto res = text::parse(src);
  std::set<std::string> all{"a", "b"};
  std::string out = text::render(res.program, res.trace, all);
  CHECK(out ==
        "a ~ gaussian(0, 1) -> <mask>\n"
        "b = a * 2 -> <mask>\n");
}

TEST_CASE("render throws when the trace misses an unmasked value") {
  auto res = text::parse("a ~ gaussian(0, 1) -> 0.1\nb = a * 2 -> 0.2\n");
  res.trace.values.erase("b");
  CHECK_THROWS_AS(text::render(res.program, res.trace), std::invalid_argument);
}

TEST_CASE("render_masked_all produces interchange text") {
  auto res = text::parse("a ~ gaussian(0, 1) -> 0.77\n");
  std::string out = text::render_masked_all(res.program);
  CHECK(out == "a ~ gaussian(0, 1) -> <mask>\n");
}

TEST_CASE("split_blocks separates programs") {
  auto blocks = text::split_blocks("a ~ gaussian(0, 1) -> 1\n---\nb ~ uniform(0, 1) -> 0.5\n");
  REQUIRE(blocks.size() == 2);
  CHECK(blocks[0] == "a ~ gaussian(0, 1) -> 1\n");
}
