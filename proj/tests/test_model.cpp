#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mli/dataset.hpp"
#include "mli/exec.hpp"
#include "mli/model.hpp"
#include "mli/text.hpp"

using namespace mli;
using nn::Matrix;

namespace {

nn::ModelConfig tiny_config() {
  nn::ModelConfig cfg;
  cfg.dim = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.max_len = 24;
  return cfg;
}

tok::TokenSeq small_seq() {
  return tok::tokenize("x ~ gaussian(0, 1) -> <mask>\ny ~ bernoulli(0.4) -> <mask>\n", 24);
}

}  // namespace

TEST_CASE("encode output shape and attention normalization") {
  auto params = nn::ModelParams::init(tiny_config(), 3);
  auto seq = small_seq();
  auto enc = nn::encode(params, seq);
  CHECK(enc.vectors.rows() == seq.length());
  CHECK(enc.vectors.cols() == 8);
  REQUIRE(enc.attention.size() == 2);
  for (const auto& head : enc.attention)
    for (Eigen::Index r = 0; r < head.rows(); ++r)
      CHECK(head.row(r).sum() == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("pad suffix does not change non-pad outputs") {
  auto params = nn::ModelParams::init(tiny_config(), 3);
  auto seq = small_seq();
  auto plain = nn::encode(params, seq);

  tok::TokenSeq padded = seq;
  for (int i = 0; i < 4; ++i) {
    padded.ids.push_back(tok::kPad);
    padded.payloads.push_back(std::numeric_limits<double>::quiet_NaN());
  }
  auto with_pads = nn::encode(params, padded);
  for (int r = 0; r < seq.length(); ++r)
    for (int c = 0; c < 8; ++c) CHECK(with_pads.vectors(r, c) == plain.vectors(r, c));
}

TEST_CASE("initialization and forward are deterministic in the seed") {
  auto a = nn::ModelParams::init(tiny_config(), 7);
  auto b = nn::ModelParams::init(tiny_config(), 7);
  auto c = nn::ModelParams::init(tiny_config(), 8);
  auto ra = a.registry(), rb = b.registry(), rc = c.registry();
  bool same = true, diff = false;
  for (size_t i = 0; i < ra.size(); ++i) {
    same = same && (*ra[i] == *rb[i]);
    diff = diff || !(*ra[i] == *rc[i]);
  }
  CHECK(same);
  CHECK(diff);
  auto seq = small_seq();
  CHECK(nn::encode(a, seq).vectors == nn::encode(b, seq).vectors);
}

TEST_CASE("zero-initialized heads give N(0,1) and prob one half") {
  auto params = nn::ModelParams::init(tiny_config(), 5);
  auto seq = small_seq();
  auto posts = nn::query_posteriors(
      params, seq,
      {{seq.lines[0].annotation_pos, ast::ValueType::Continuous},
       {seq.lines[1].annotation_pos, ast::ValueType::Binary}});
  REQUIRE(posts.size() == 2);
  CHECK(posts[0].mean == 0.0);
  CHECK(posts[0].std == 1.0);
  CHECK(posts[1].prob == 0.5);
}

TEST_CASE("head outputs one posterior per query") {
  auto params = nn::ModelParams::init(tiny_config(), 5);
  auto seq = small_seq();
  std::vector<std::pair<int, ast::ValueType>> queries;
  for (const auto& line : seq.lines)
    queries.push_back({line.annotation_pos, ast::ValueType::Continuous});
  CHECK(nn::query_posteriors(params, seq, queries).size() == queries.size());
}

TEST_CASE("full-model gradient check against central differences") {
  // d=8, one layer, short sequence, loss touching every head.
  auto cfg = tiny_config();
  auto params = nn::ModelParams::init(cfg, 11);
  auto seq = tok::tokenize(
      "x ~ gaussian(0, 1) -> <mask>\n"
      "y ~ bernoulli(0.4) -> <mask>\n", cfg.max_len);

  std::vector<int> mlm_pos{2, 7};  // '~' and ','
  std::vector<int> mlm_targets_ids{seq.ids[2], seq.ids[7]};
  tok::TokenSeq masked = seq;
  masked.ids[2] = tok::kMask;
  masked.ids[7] = tok::kMask;
  std::vector<int> cont_pos{seq.lines[0].annotation_pos};
  std::vector<int> bin_pos{seq.lines[1].annotation_pos};
  Eigen::VectorXd cont_t(1);
  cont_t << 0.62;
  Eigen::VectorXd bin_t(1);
  bin_t << 1.0;

  auto loss = [&](nn::GradStore* sink) {
    nn::Tape t;
    auto enc = nn::encode_on_tape(t, params, masked, sink);
    auto heads = nn::heads_on_tape(t, params, enc.final_node, mlm_pos, cont_pos, bin_pos, sink);
    int out = t.add(t.ce_logits_sum(heads.mlm_logits, mlm_targets_ids),
                    t.add(t.gaussian_nll_sum(heads.cont_mean, heads.cont_logstd, cont_t),
                          t.bernoulli_nll_sum(heads.bin_logits, bin_t)));
    int scaled = t.scale(out, 0.25);
    if (sink) t.backward(scaled);
    return t.val(scaled)(0, 0);
  };

  nn::GradStore sink(static_cast<int>(params.registry().size()));
  loss(&sink);

  auto tensors = params.registry();
  auto names = params.registry_names();
  const double h = 1e-4;
  double worst = 0;
  for (size_t pi = 0; pi < tensors.size(); ++pi) {
    Matrix& w = *tensors[pi];
    const Matrix& g = sink.at(static_cast<int>(pi)).size()
                          ? sink.at(static_cast<int>(pi))
                          : Matrix::Zero(w.rows(), w.cols()).eval();
    for (int i = 0; i < w.rows(); ++i) {
      for (int j = 0; j < w.cols(); ++j) {
        double keep = w(i, j);
        w(i, j) = keep + h;
        double up = loss(nullptr);
        w(i, j) = keep - h;
        double dn = loss(nullptr);
        w(i, j) = keep;
        double fd = (up - dn) / (2 * h);
        double rel = std::fabs(g(i, j) - fd) /
                     std::max({std::fabs(g(i, j)), std::fabs(fd), 1e-4});
        worst = std::max(worst, rel);
      }
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("attention line summary: uniform attention gives equal entries") {
  auto seq = tok::tokenize(
      "a ~ gaussian(0, 1) -> <mask>\n"
      "b ~ gaussian(0, 1) -> 0.5\n"
      "c = a + b -> <mask>\n");
  int n = seq.length();
  std::vector<Matrix> attn{Matrix::Constant(n, n, 1.0 / n), Matrix::Constant(n, n, 1.0 / n)};
  auto summary = nn::attention_line_summary(attn, seq);
  REQUIRE(summary.row_labels == std::vector<std::string>{"a", "c"});
  CHECK(summary.col_labels.size() == 3);
  for (Eigen::Index r = 0; r < summary.values.rows(); ++r)
    for (Eigen::Index c = 0; c < summary.values.cols(); ++c)
      CHECK(summary.values(r, c) == doctest::Approx(1.0 / n));
}

TEST_CASE("learning-rate schedule: warmup then linear decay") {
  nn::AdamConfig cfg;
  cfg.lr = 4e-3;
  cfg.warmup_steps = 5000;
  cfg.total_steps = 15000;
  CHECK(nn::lr_at(cfg, 0) == 0.0);
  CHECK(nn::lr_at(cfg, 2500) == doctest::Approx(2e-3));
  CHECK(nn::lr_at(cfg, 5000) == doctest::Approx(4e-3));
  CHECK(nn::lr_at(cfg, 10000) == doctest::Approx(2e-3));
  CHECK(nn::lr_at(cfg, 15000) == doctest::Approx(0.0));
}

TEST_CASE("adam: zero gradients leave fresh params unchanged, time advances") {
  auto params = nn::ModelParams::init(tiny_config(), 2);
  auto before = params;
  auto state = nn::AdamState::init(params);
  nn::GradStore grads(static_cast<int>(params.registry().size()));
  nn::AdamConfig cfg;
  cfg.warmup_steps = 0;
  nn::adam_step(params, grads, state, cfg, 1);
  CHECK(state.t == 1);
  auto ra = params.registry(), rb = before.registry();
  for (size_t i = 0; i < ra.size(); ++i) CHECK(*ra[i] == *rb[i]);
}

TEST_CASE("adam clips the global gradient norm") {
  auto cfg = tiny_config();
  auto params = nn::ModelParams::init(cfg, 2);
  auto state = nn::AdamState::init(params);
  nn::GradStore grads(static_cast<int>(params.registry().size()));
  // One gradient with norm 10 and clip 1 -> effective gradient scaled by 0.1.
  Matrix g = Matrix::Zero(params.inf_w.rows(), params.inf_w.cols());
  g(0, 0) = 10.0;
  int inf_w_id = 0;
  auto names = params.registry_names();
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == "inf_w") inf_w_id = static_cast<int>(i);
  grads.accumulate(inf_w_id, params.inf_w) = g;

  nn::AdamConfig acfg;
  acfg.clip_norm = 1.0;
  acfg.warmup_steps = 0;
  nn::adam_step(params, grads, state, acfg, 1);
  CHECK(state.m[inf_w_id](0, 0) == doctest::Approx((1.0 - acfg.beta1) * 1.0));
}

TEST_CASE("checkpoint round trip and mismatch rejection") {
  auto params = nn::ModelParams::init(tiny_config(), 21);
  std::string path = "/tmp/mli_ckpt_test.bin";
  nn::save_checkpoint(params, path);
  auto loaded = nn::load_checkpoint(path);
  auto ra = params.registry(), rb = loaded.registry();
  for (size_t i = 0; i < ra.size(); ++i) CHECK(*ra[i] == *rb[i]);
  CHECK(loaded.config.dim == params.config.dim);

  // A truncated file must be rejected.
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(nn::load_checkpoint(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("log-std clamp keeps every Gaussian density above the floor") {
  auto params = nn::ModelParams::init(tiny_config(), 9);
  // Push the inference head to extreme outputs.
  params.inf_w.setConstant(50.0);
  params.inf_b.setConstant(-50.0);
  auto seq = small_seq();
  auto posts = nn::query_posteriors(
      params, seq, {{seq.lines[0].annotation_pos, ast::ValueType::Continuous}});
  CHECK(posts[0].std >= std::exp(-7.0) * 0.999);
  CHECK(posts[0].std <= std::exp(3.0) * 1.001);
  double z = 1.7;
  CHECK(posts[0].log_density(z) >= exec::gaussian_logpdf(z, posts[0].mean, std::exp(3.0)) - 1e-9);
}
