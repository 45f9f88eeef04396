#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "mli/dataset.hpp"
#include "mli/exec.hpp"
#include "mli/text.hpp"

using namespace mli;

TEST_CASE("builtin latent matches the listing") {
  const auto& p = data::builtin("latent");
  REQUIRE(p.statements.size() == 9);
  const auto& last = p.statements.back();
  CHECK(last.target == "z4");
  CHECK(last.kind == ast::Statement::Kind::Sample);
  CHECK(last.dist == ast::DistFamily::Gaussian);
  CHECK(last.args[0].var == "z3");
  CHECK(last.args[1].var == "sigma2");
  CHECK(ast::validate(p).empty());
}

TEST_CASE("all builtins validate; toy suite has six programs") {
  for (const auto& [name, p] : data::builtin_programs()) {
    INFO(name);
    CHECK(ast::validate(p).empty());
  }
  CHECK(data::toy_program_names().size() == 6);
  CHECK(data::builtin_programs().size() == 10);
}

TEST_CASE("rosenbrock program calls the external function on (z1, z2)") {
  const auto& p = data::builtin("rosenbrock");
  const auto& r = p.statements[6];
  CHECK(r.target == "r");
  REQUIRE(r.kind == ast::Statement::Kind::Deterministic);
  REQUIRE(r.expr.kind == ast::Expr::Kind::Call);
  CHECK(r.expr.fn == ast::FnName::Rosenbrock);
  CHECK(r.expr.args[0].var == "z1");
  CHECK(r.expr.args[1].var == "z2");
}

TEST_CASE("IRT response probability is one half when ability equals difficulty") {
  const auto& p = data::builtin("irt");
  Trace t;
  t.minibatch = Trace::Minibatch{{1}, 30};
  t.values["ability"] = 0.7;
  t.values[member_name("d", 1)] = 0.7;
  t.values[member_name("r", 1)] = 1.0;
  CHECK(exec::conditional_logpdf(p, t, "r[1]") == doctest::Approx(std::log(0.5)));
}

TEST_CASE("latent executions respect the hyperprior supports") {
  const auto& p = data::builtin("latent");
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Trace t = exec::run(p, seed);
    CHECK(t.values.at("sigma1") > 0);
    CHECK(t.values.at("sigma1") < 20);
    CHECK(t.values.at("sigma2") > 0.5);
    CHECK(t.values.at("sigma2") < 10);
  }
}

TEST_CASE("mask schedule interpolates linearly") {
  data::MaskSchedule s;
  s.total_steps = 1001;
  CHECK(s.inf_rate(0) == doctest::Approx(0.15));
  CHECK(s.inf_rate(500) == doctest::Approx(0.325));
  CHECK(s.inf_rate(1000) == doctest::Approx(0.50));
  CHECK(s.inf_rate(99999) == doctest::Approx(0.50));
}

TEST_CASE("instances mask value slots only and keep exact targets") {
  data::MaskSchedule s;
  s.total_steps = 10;
  auto inst = data::make_instance(data::builtin("latent"), s, 5, 42);
  REQUIRE(!inst.inf_targets.empty());
  for (const auto& t : inst.inf_targets) {
    CHECK(inst.inf_tokens.ids[t.pos] == tok::kMask);
    CHECK(inst.inf_tokens.lines[t.line_index].annotation_pos == t.pos);
  }
  for (const auto& t : inst.mlm_targets) {
    CHECK(inst.mlm_tokens.ids[t.pos] == tok::kMask);
    CHECK(t.token_id != tok::kNum);  // symbolic tokens only
    CHECK(t.token_id != tok::kMask);
  }
}

TEST_CASE("unmasking with stored targets reproduces the unmasked text") {
  data::MaskSchedule s;
  s.total_steps = 10;
  auto inst = data::make_instance(data::builtin("independent_gaussians"), s, 9, 7);
  tok::TokenSeq seq = inst.inf_tokens;
  for (const auto& t : inst.inf_targets) {
    seq.ids[t.pos] = tok::kNum;
    seq.payloads[t.pos] = t.value;
  }
  Trace trace = exec::run(data::builtin("independent_gaussians"), Rng(7).derive("exec").next_u64());
  std::string full = text::render(data::builtin("independent_gaussians"), trace, {});
  CHECK(tok::detokenize(seq) == full);
}

TEST_CASE("masked-assignment count follows the binomial expectation") {
  data::MaskSchedule s;
  s.inf_rate_start = 0.5;
  s.inf_rate_end = 0.5;
  s.total_steps = 2;
  const auto& latent = data::builtin("latent");  // 9 assignments
  double total = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    total += static_cast<double>(data::make_instance(latent, s, 0, i).inf_targets.size());
  CHECK(total / n == doctest::Approx(4.5).epsilon(0.1 / 4.5));
}

TEST_CASE("corpus build, save, load, rehydrate") {
  data::BuildConfig cfg;
  cfg.n_train_per_program = 3;
  cfg.n_dev_per_program = 1;
  cfg.n_test_per_program = 2;
  cfg.seed = 11;
  std::vector<ast::Program> programs{data::builtin("latent"), data::builtin("common_effect")};
  data::Corpus corpus = data::build_corpus(programs, cfg);
  CHECK(corpus.records.size() == 2 * 6);
  CHECK(corpus.split_records("train").size() == 6);
  CHECK(corpus.split_records("test").size() == 4);

  std::string path = "/tmp/mli_test_corpus.txt";
  data::save_corpus(corpus, path);
  data::Corpus loaded = data::load_corpus(path);
  REQUIRE(loaded.records.size() == corpus.records.size());
  for (size_t i = 0; i < corpus.records.size(); ++i) {
    CHECK(loaded.records[i].masked_text == corpus.records[i].masked_text);
    CHECK(loaded.records[i].seed == corpus.records[i].seed);
    CHECK(loaded.records[i].targets == corpus.records[i].targets);
  }

  for (const auto& rec : loaded.records) {
    data::LoadedRecord lr = data::rehydrate(rec);
    CHECK(!lr.baked_masks.empty());
    // Every assignment has a value after rehydration, and the quantized
    // trace still scores inside the joint's support.
    for (const auto& key : data::assignment_keys(lr.program, lr.trace))
      CHECK(lr.trace.values.count(key) == 1);
    CHECK(exec::log_joint(lr.program, lr.trace) != exec::kLogZero);
  }
  std::remove(path.c_str());
}

TEST_CASE("rebuilding with the same seed is byte-identical") {
  data::BuildConfig cfg;
  cfg.n_train_per_program = 2;
  cfg.n_test_per_program = 1;
  cfg.seed = 5;
  cfg.augment = aug::Policy{};
  std::vector<ast::Program> programs{data::builtin("latent")};
  std::string a = "/tmp/mli_corpus_a.txt", b = "/tmp/mli_corpus_b.txt";
  data::save_corpus(data::build_corpus(programs, cfg), a);
  data::save_corpus(data::build_corpus(programs, cfg), b);
  std::ifstream fa(a), fb(b);
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(!sa.empty());
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST_CASE("held-out split ignores the corpus seed") {
  data::BuildConfig a, b;
  a.n_test_per_program = 2;
  b.n_test_per_program = 2;
  a.seed = 1;
  b.seed = 2;
  std::vector<ast::Program> programs{data::builtin("latent")};
  auto ca = data::build_corpus(programs, a);
  auto cb = data::build_corpus(programs, b);
  REQUIRE(ca.records.size() == cb.records.size());
  for (size_t i = 0; i < ca.records.size(); ++i)
    CHECK(ca.records[i].masked_text == cb.records[i].masked_text);
}

TEST_CASE("train and held-out records never share seeds") {
  data::BuildConfig cfg;
  cfg.n_train_per_program = 5;
  cfg.n_test_per_program = 5;
  cfg.seed = 3;
  std::vector<ast::Program> programs{data::builtin("latent")};
  auto corpus = data::build_corpus(programs, cfg);
  std::set<uint64_t> train, test;
  for (const auto& r : corpus.records)
    (r.split == "train" ? train : test).insert(r.seed);
  for (uint64_t s : test) CHECK(train.count(s) == 0);
}

TEST_CASE("empty corpus is a valid file") {
  data::BuildConfig cfg;
  std::vector<ast::Program> programs{data::builtin("latent")};
  auto corpus = data::build_corpus(programs, cfg);
  CHECK(corpus.records.empty());
  std::string path = "/tmp/mli_empty_corpus.txt";
  data::save_corpus(corpus, path);
  auto loaded = data::load_corpus(path);
  CHECK(loaded.records.empty());
  CHECK(loaded.program_names == std::vector<std::string>{"latent"});
  std::remove(path.c_str());
}

TEST_CASE("plated corpus records keep their minibatch") {
  data::BuildConfig cfg;
  cfg.n_train_per_program = 2;
  cfg.minibatch_k = 2;
  cfg.seed = 8;
  std::vector<ast::Program> programs{data::builtin("irt")};
  auto corpus = data::build_corpus(programs, cfg);
  for (const auto& rec : corpus.records) {
    auto lr = data::rehydrate(rec);
    REQUIRE(lr.trace.minibatch.has_value());
    CHECK(lr.trace.minibatch->total == 30);
    CHECK(lr.trace.minibatch->indices.size() == 2);
  }
}
