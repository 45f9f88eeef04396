#include "mli/dataset.hpp"
#include "mli/text.hpp"

namespace mli::data {

namespace {

ast::Program from_text(const std::string& name, const std::string& listing) {
  ast::Program p = text::parse(listing).program;
  p.name = name;
  return p;
}

std::map<std::string, ast::Program> build_all() {
  std::map<std::string, ast::Program> m;

  m["latent"] = from_text("latent",
      "mu1 ~ uniform(-5, 5) -> <mask>\n"
      "sigma1 ~ uniform(0, 20) -> <mask>\n"
      "z1 ~ gaussian(mu1, sigma1) -> <mask>\n"
      "c1 ~ uniform(-3, 3) -> <mask>\n"
      "z2 = z1 * c1 -> <mask>\n"
      "c2 ~ uniform(-10, 10) -> <mask>\n"
      "z3 = z2 + c2 -> <mask>\n"
      "sigma2 ~ uniform(0.5, 10) -> <mask>\n"
      "z4 ~ gaussian(z3, sigma2) -> <mask>\n");

  m["clustering"] = from_text("clustering",
      "mu1 ~ uniform(-15, 15) -> <mask>\n"
      "sigma1 ~ uniform(0.5, 50) -> <mask>\n"
      "g1 ~ gaussian(mu1, sigma1) -> <mask>\n"
      "mu2 ~ uniform(-15, 15) -> <mask>\n"
      "sigma2 ~ uniform(0.5, 50) -> <mask>\n"
      "g2 ~ gaussian(mu2, sigma2) -> <mask>\n"
      "t1 ~ gaussian(0, 100) -> <mask>\n"
      "m1 = if (t1 > 0) g1 else g2 -> <mask>\n"
      "sigma3 ~ uniform(0.5, 10) -> <mask>\n"
      "z1 ~ gaussian(m1, sigma3) -> <mask>\n"
      "t2 ~ gaussian(0, 100) -> <mask>\n"
      "m2 = if (t2 > 0) g1 else g2 -> <mask>\n"
      "z2 ~ gaussian(m2, sigma3) -> <mask>\n");

  m["hierarchical"] = from_text("hierarchical",
      "mu1 ~ uniform(-5, 5) -> <mask>\n"
      "sigma1 ~ uniform(0, 50) -> <mask>\n"
      "g ~ gaussian(mu1, sigma1) -> <mask>\n"
      "sigma2 ~ uniform(0, 10) -> <mask>\n"
      "t1 ~ gaussian(g, sigma2) -> <mask>\n"
      "sigma3 ~ uniform(0, 10) -> <mask>\n"
      "t2 ~ gaussian(g, sigma3) -> <mask>\n"
      "sigma4 ~ uniform(0.5, 10) -> <mask>\n"
      "z1 ~ gaussian(t1, sigma4) -> <mask>\n"
      "sigma5 ~ uniform(0.5, 10) -> <mask>\n"
      "z2 ~ gaussian(t2, sigma5) -> <mask>\n");

  m["multilevel"] = from_text("multilevel",
      "mu1 ~ uniform(-10, 10) -> <mask>\n"
      "sigma1 ~ uniform(0, 100) -> <mask>\n"
      "a0 ~ gaussian(mu1, sigma1) -> <mask>\n"
      "sigma2 ~ uniform(0, 10) -> <mask>\n"
      "a1 ~ gaussian(a0, sigma2) -> <mask>\n"
      "sigma3 ~ uniform(0, 10) -> <mask>\n"
      "a2 ~ gaussian(a0, sigma3) -> <mask>\n"
      "mu2 ~ uniform(-5, 5) -> <mask>\n"
      "sigma4 ~ uniform(0, 10) -> <mask>\n"
      "b ~ gaussian(mu2, sigma4) -> <mask>\n"
      "c1 ~ uniform(-5, 5) -> <mask>\n"
      "t1 = b * c1 -> <mask>\n"
      "t2 = a1 + t1 -> <mask>\n"
      "sigma5 ~ uniform(0.5, 10) -> <mask>\n"
      "z1 ~ gaussian(t2, sigma5) -> <mask>\n"
      "c2 ~ uniform(-5, 5) -> <mask>\n"
      "t3 = b * c2 -> <mask>\n"
      "t4 = a2 + t3 -> <mask>\n"
      "sigma6 ~ uniform(0.5, 10) -> <mask>\n"
      "z2 ~ gaussian(t4, sigma6) -> <mask>\n");

  m["milky_way"] = from_text("milky_way",
      "mu1 ~ uniform(-10, 10) -> <mask>\n"
      "sigma1 ~ uniform(0, 30) -> <mask>\n"
      "m0 ~ gaussian(mu1, sigma1) -> <mask>\n"
      "c1 ~ uniform(-2, 2) -> <mask>\n"
      "m1 = m0 * c1 -> <mask>\n"
      "sigma2 ~ uniform(0, 10) -> <mask>\n"
      "g1 ~ gaussian(m1, sigma2) -> <mask>\n"
      "c2 ~ uniform(-5, 5) -> <mask>\n"
      "m2 = m0 + c2 -> <mask>\n"
      "sigma3 ~ uniform(0, 10) -> <mask>\n"
      "g2 ~ gaussian(m2, sigma3) -> <mask>\n"
      "sigma4 ~ uniform(0.5, 10) -> <mask>\n"
      "z1 ~ gaussian(g1, sigma4) -> <mask>\n"
      "sigma5 ~ uniform(0.5, 10) -> <mask>\n"
      "z2 ~ gaussian(g2, sigma5) -> <mask>\n");

  m["rosenbrock"] = from_text("rosenbrock",
      "mu1 ~ uniform(-8, 8) -> <mask>\n"
      "sigma1 ~ uniform(0, 5) -> <mask>\n"
      "z1 ~ gaussian(mu1, sigma1) -> <mask>\n"
      "mu2 ~ uniform(-8, 8) -> <mask>\n"
      "sigma2 ~ uniform(0, 5) -> <mask>\n"
      "z2 ~ gaussian(mu2, sigma2) -> <mask>\n"
      "r = rosenbrock(z1, z2) -> <mask>\n"
      "sigma3 ~ uniform(0.5, 10) -> <mask>\n"
      "z3 ~ gaussian(r, sigma3) -> <mask>\n");

  m["independent_gaussians"] = from_text("independent_gaussians",
      "mu1 ~ uniform(-5, 0) -> <mask>\n"
      "sigma1 ~ uniform(0, 5) -> <mask>\n"
      "z1 ~ gaussian(mu1, sigma1) -> <mask>\n"
      "mu2 ~ uniform(0, 5) -> <mask>\n"
      "sigma2 ~ uniform(0, 5) -> <mask>\n"
      "y1 ~ gaussian(mu2, sigma2) -> <mask>\n"
      "z2 = z1 * 2 -> <mask>\n"
      "y2 = y1 * 2 -> <mask>\n");

  m["conditional_independence"] = from_text("conditional_independence",
      "p ~ uniform(0, 1) -> <mask>\n"
      "z ~ bernoulli(p) -> <mask>\n"
      "a = if (z == 1) 1 else 10 -> <mask>\n"
      "b = if (z == 1) 3 else -3 -> <mask>\n"
      "x ~ gaussian(a, 1) -> <mask>\n"
      "y ~ gaussian(b, 1) -> <mask>\n");

  m["common_effect"] = from_text("common_effect",
      "px ~ uniform(0, 1) -> <mask>\n"
      "py ~ uniform(0, 1) -> <mask>\n"
      "x ~ bernoulli(px) -> <mask>\n"
      "y ~ bernoulli(py) -> <mask>\n"
      "z = if (x or y) 1 else 0 -> <mask>\n");

  // Rasch model: 30 questions per student, one student per execution.
  m["irt"] = from_text("irt",
      "ability ~ gaussian(0, 1) -> <mask>\n"
      "plate(30):\n"
      "  d[1] ~ gaussian(0, 1) -> <mask>\n"
      "  r[1] ~ bernoulli(sigmoid(ability + (d[1] * -1))) -> <mask>\n");

  return m;
}

}  // namespace

const std::map<std::string, ast::Program>& builtin_programs() {
  static const std::map<std::string, ast::Program> m = build_all();
  return m;
}

const ast::Program& builtin(const std::string& name) {
  const auto& m = builtin_programs();
  auto it = m.find(name);
  if (it == m.end()) throw std::invalid_argument("unknown builtin program '" + name + "'");
  return it->second;
}

const std::vector<std::string>& toy_program_names() {
  static const std::vector<std::string> names{"latent",     "clustering", "hierarchical",
                                              "multilevel", "milky_way",  "rosenbrock"};
  return names;
}

}  // namespace mli::data
