#include "mli/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "mli/exec.hpp"

namespace mli::nn {

double Posterior::log_density(double value) const {
  if (type == ast::ValueType::Binary) return exec::bernoulli_logpmf(value, prob);
  return exec::gaussian_logpdf(value, mean, std);
}

double Posterior::sample(Rng& rng) const {
  if (type == ast::ValueType::Binary) return rng.bernoulli(prob) ? 1.0 : 0.0;
  return mean + std * rng.normal();
}

namespace {

Matrix gaussian_init(int rows, int cols, double std, Rng rng) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = std * rng.normal();
  return m;
}

}  // namespace

ModelParams ModelParams::init(ModelConfig config, uint64_t seed) {
  if (config.vocab == 0) config.vocab = tok::vocab_size();
  if (config.dim % config.heads != 0)
    throw std::invalid_argument("model dim must be divisible by heads");
  Rng rng(seed);
  const double w = 0.02;
  ModelParams p;
  p.config = config;
  int d = config.dim;
  p.tok_emb = gaussian_init(config.vocab, d, w, rng.derive("tok_emb"));
  p.pos_emb = gaussian_init(config.max_len, d, w, rng.derive("pos_emb"));
  p.num_w = gaussian_init(3, d, w, rng.derive("num_w"));
  p.num_b = Matrix::Zero(1, d);
  for (int i = 0; i < config.layers; ++i) {
    Rng lr = rng.derive("layer").derive(static_cast<uint64_t>(i));
    Layer layer;
    layer.ln1_g = Matrix::Ones(1, d);
    layer.ln1_b = Matrix::Zero(1, d);
    layer.wq = gaussian_init(d, d, w, lr.derive("wq"));
    layer.bq = Matrix::Zero(1, d);
    layer.wk = gaussian_init(d, d, w, lr.derive("wk"));
    layer.bk = Matrix::Zero(1, d);
    layer.wv = gaussian_init(d, d, w, lr.derive("wv"));
    layer.bv = Matrix::Zero(1, d);
    layer.wo = gaussian_init(d, d, w, lr.derive("wo"));
    layer.bo = Matrix::Zero(1, d);
    layer.ln2_g = Matrix::Ones(1, d);
    layer.ln2_b = Matrix::Zero(1, d);
    layer.w1 = gaussian_init(d, 4 * d, w, lr.derive("w1"));
    layer.b1 = Matrix::Zero(1, 4 * d);
    layer.w2 = gaussian_init(4 * d, d, w, lr.derive("w2"));
    layer.b2 = Matrix::Zero(1, d);
    p.layers.push_back(std::move(layer));
  }
  p.lnf_g = Matrix::Ones(1, d);
  p.lnf_b = Matrix::Zero(1, d);
  p.mlm_w = gaussian_init(d, config.vocab, w, rng.derive("mlm_w"));
  p.mlm_b = Matrix::Zero(1, config.vocab);
  p.inf_w = Matrix::Zero(d, 2);
  p.inf_b = Matrix::Zero(1, 2);
  p.bin_w = Matrix::Zero(d, 1);
  p.bin_b = Matrix::Zero(1, 1);
  return p;
}

std::vector<Matrix*> ModelParams::registry() {
  std::vector<Matrix*> out{&tok_emb, &pos_emb, &num_w, &num_b};
  for (auto& l : layers)
    for (Matrix* m : {&l.ln1_g, &l.ln1_b, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo,
                      &l.ln2_g, &l.ln2_b, &l.w1, &l.b1, &l.w2, &l.b2})
      out.push_back(m);
  for (Matrix* m : {&lnf_g, &lnf_b, &mlm_w, &mlm_b, &inf_w, &inf_b, &bin_w, &bin_b})
    out.push_back(m);
  return out;
}

std::vector<const Matrix*> ModelParams::registry() const {
  auto mut = const_cast<ModelParams*>(this)->registry();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> ModelParams::registry_names() const {
  std::vector<std::string> out{"tok_emb", "pos_emb", "num_w", "num_b"};
  for (size_t i = 0; i < layers.size(); ++i) {
    std::string p = "layer" + std::to_string(i) + ".";
    for (const char* n : {"ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                          "ln2_g", "ln2_b", "w1", "b1", "w2", "b2"})
      out.push_back(p + n);
  }
  for (const char* n : {"lnf_g", "lnf_b", "mlm_w", "mlm_b", "inf_w", "inf_b", "bin_w", "bin_b"})
    out.push_back(n);
  return out;
}

long ModelParams::scalar_count() const {
  long total = 0;
  for (const Matrix* m : registry()) total += static_cast<long>(m->size());
  return total;
}

namespace {

// Numeric payload features: sign, log magnitude, clamped linear value.
Eigen::RowVector3d num_features(double v) {
  double sign = v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
  double clamped = std::max(-100.0, std::min(100.0, v)) / 100.0;
  return {sign, std::log1p(std::fabs(v)), clamped};
}

struct ParamIds {
  // Param ids follow registry order; this mirrors the offsets.
  static constexpr int tok_emb = 0, pos_emb = 1, num_w = 2, num_b = 3;
  static int layer_base(int i) { return 4 + 16 * i; }
  int lnf_g, lnf_b, mlm_w, mlm_b, inf_w, inf_b, bin_w, bin_b;
  explicit ParamIds(int n_layers) {
    int base = 4 + 16 * n_layers;
    lnf_g = base;
    lnf_b = base + 1;
    mlm_w = base + 2;
    mlm_b = base + 3;
    inf_w = base + 4;
    inf_b = base + 5;
    bin_w = base + 6;
    bin_b = base + 7;
  }
};

}  // namespace

EncodeNodes encode_on_tape(Tape& tape, const ModelParams& params, const tok::TokenSeq& seq,
                           GradStore* sink) {
  const int n = seq.length();
  const ModelConfig& cfg = params.config;
  if (n > cfg.max_len)
    throw std::invalid_argument("encode: sequence of length " + std::to_string(n) +
                                " exceeds max_len " + std::to_string(cfg.max_len));
  if (n == 0) throw std::invalid_argument("encode: empty sequence");

  int valid = n;
  for (int i = 0; i < n; ++i) {
    if (seq.ids[i] == tok::kPad) {
      valid = i;
      break;
    }
  }
  if (valid == 0) throw std::invalid_argument("encode: sequence starts with <pad>");

  ParamIds ids(cfg.layers);

  std::vector<int> pos_ids(n);
  for (int i = 0; i < n; ++i) pos_ids[i] = i;

  Matrix feats = Matrix::Zero(n, 3);
  Matrix num_mask = Matrix::Zero(n, 1);
  for (int i = 0; i < n; ++i) {
    if (seq.ids[i] == tok::kNum) {
      feats.row(i) = num_features(seq.payloads[i]);
      num_mask(i, 0) = 1.0;
    }
  }

  int tok_node = tape.embedding_rows(params.tok_emb, ParamIds::tok_emb, sink, seq.ids);
  int pos_node = tape.embedding_rows(params.pos_emb, ParamIds::pos_emb, sink, pos_ids);
  int proj = tape.matmul_param(tape.constant(feats), params.num_w, ParamIds::num_w, sink);
  int bias = tape.matmul_param(tape.constant(num_mask), params.num_b, ParamIds::num_b, sink);
  int x = tape.add(tape.add(tok_node, pos_node), tape.add(proj, bias));

  const int d = cfg.dim;
  const int dh = d / cfg.heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  EncodeNodes out;
  out.valid_len = valid;

  for (int li = 0; li < cfg.layers; ++li) {
    const auto& L = params.layers[li];
    int base = ParamIds::layer_base(li);
    int h = tape.layer_norm(x, L.ln1_g, base + 0, L.ln1_b, base + 1, sink);
    int q = tape.add_rowvec_param(tape.matmul_param(h, L.wq, base + 2, sink), L.bq, base + 3, sink);
    int k = tape.add_rowvec_param(tape.matmul_param(h, L.wk, base + 4, sink), L.bk, base + 5, sink);
    int v = tape.add_rowvec_param(tape.matmul_param(h, L.wv, base + 6, sink), L.bv, base + 7, sink);

    std::vector<int> ctx_heads;
    std::vector<Matrix> attn;
    for (int hh = 0; hh < cfg.heads; ++hh) {
      int qh = tape.slice_cols(q, hh * dh, (hh + 1) * dh);
      int kh = tape.slice_cols(k, hh * dh, (hh + 1) * dh);
      int vh = tape.slice_cols(v, hh * dh, (hh + 1) * dh);
      int scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), att_scale);
      int p = tape.softmax_rows(scores, valid);
      if (li == cfg.layers - 1) attn.push_back(tape.val(p));
      ctx_heads.push_back(tape.matmul(p, vh));
    }
    int ctx = tape.concat_cols(ctx_heads);
    int att_out = tape.add_rowvec_param(tape.matmul_param(ctx, L.wo, base + 8, sink), L.bo,
                                        base + 9, sink);
    x = tape.add(x, att_out);

    int h2 = tape.layer_norm(x, L.ln2_g, base + 10, L.ln2_b, base + 11, sink);
    int mid = tape.gelu(
        tape.add_rowvec_param(tape.matmul_param(h2, L.w1, base + 12, sink), L.b1, base + 13, sink));
    int ff = tape.add_rowvec_param(tape.matmul_param(mid, L.w2, base + 14, sink), L.b2, base + 15,
                                   sink);
    x = tape.add(x, ff);

    if (!tape.val(x).allFinite())
      throw std::runtime_error("encode: non-finite activation in encoder layer " +
                               std::to_string(li));
    if (li == cfg.layers - 1) out.attention = std::move(attn);
  }

  out.final_node = tape.layer_norm(x, params.lnf_g, ids.lnf_g, params.lnf_b, ids.lnf_b, sink);
  if (!tape.val(out.final_node).allFinite())
    throw std::runtime_error("encode: non-finite activation in final layer norm");
  return out;
}

Encoded encode(const ModelParams& params, const tok::TokenSeq& seq) {
  Tape tape;
  EncodeNodes nodes = encode_on_tape(tape, params, seq, nullptr);
  return {tape.val(nodes.final_node), std::move(nodes.attention)};
}

HeadNodes heads_on_tape(Tape& tape, const ModelParams& params, int final_node,
                        const std::vector<int>& mlm_positions,
                        const std::vector<int>& cont_positions,
                        const std::vector<int>& bin_positions, GradStore* sink) {
  ParamIds ids(params.config.layers);
  HeadNodes out;
  int n = static_cast<int>(tape.val(final_node).rows());
  auto check = [&](const std::vector<int>& pos) {
    for (int p : pos)
      if (p < 0 || p >= n) throw std::invalid_argument("heads: mask position out of bounds");
  };
  check(mlm_positions);
  check(cont_positions);
  check(bin_positions);

  if (!mlm_positions.empty()) {
    int g = tape.gather_rows(final_node, mlm_positions);
    out.mlm_logits = tape.add_rowvec_param(tape.matmul_param(g, params.mlm_w, ids.mlm_w, sink),
                                           params.mlm_b, ids.mlm_b, sink);
  }
  if (!cont_positions.empty()) {
    int g = tape.gather_rows(final_node, cont_positions);
    int p2 = tape.add_rowvec_param(tape.matmul_param(g, params.inf_w, ids.inf_w, sink),
                                   params.inf_b, ids.inf_b, sink);
    out.cont_mean = tape.slice_cols(p2, 0, 1);
    out.cont_logstd =
        tape.clamp(tape.slice_cols(p2, 1, 2), params.config.logstd_lo, params.config.logstd_hi);
  }
  if (!bin_positions.empty()) {
    int g = tape.gather_rows(final_node, bin_positions);
    out.bin_logits = tape.add_rowvec_param(tape.matmul_param(g, params.bin_w, ids.bin_w, sink),
                                           params.bin_b, ids.bin_b, sink);
  }
  return out;
}

std::vector<Posterior> query_posteriors(const ModelParams& params, const tok::TokenSeq& seq,
                                        const std::vector<std::pair<int, ast::ValueType>>& queries) {
  Tape tape;
  EncodeNodes enc = encode_on_tape(tape, params, seq, nullptr);
  std::vector<int> cont, bin;
  for (const auto& [pos, vt] : queries)
    (vt == ast::ValueType::Continuous ? cont : bin).push_back(pos);
  HeadNodes heads = heads_on_tape(tape, params, enc.final_node, {}, cont, bin, nullptr);

  std::vector<Posterior> out;
  size_t ci = 0, bi = 0;
  for (const auto& [pos, vt] : queries) {
    Posterior p;
    p.type = vt;
    if (vt == ast::ValueType::Continuous) {
      p.mean = tape.val(heads.cont_mean)(ci, 0);
      p.std = std::exp(tape.val(heads.cont_logstd)(ci, 0));
      ++ci;
    } else {
      double logit = tape.val(heads.bin_logits)(bi, 0);
      p.prob = 1.0 / (1.0 + std::exp(-logit));
      ++bi;
    }
    out.push_back(p);
  }
  return out;
}

AttentionSummary attention_line_summary(const std::vector<Matrix>& attention,
                                        const tok::TokenSeq& seq) {
  if (attention.empty()) throw std::invalid_argument("attention_line_summary: no attention");
  const int n = static_cast<int>(attention[0].rows());

  AttentionSummary out;
  for (const auto& line : seq.lines)
    out.col_labels.push_back(line.target.empty() ? std::string("plate") : line.target);

  std::vector<int> query_positions;
  for (const auto& line : seq.lines) {
    if (line.annotation_pos >= 0 && line.annotation_pos < n &&
        seq.ids[line.annotation_pos] == tok::kMask) {
      out.row_labels.push_back(line.target);
      query_positions.push_back(line.annotation_pos);
    }
  }
  if (query_positions.empty())
    throw std::invalid_argument("attention_line_summary: no masked assignments");

  out.values = Matrix::Zero(query_positions.size(), seq.lines.size());
  for (size_t r = 0; r < query_positions.size(); ++r) {
    Eigen::RowVectorXd weights = Eigen::RowVectorXd::Zero(n);
    for (const auto& head : attention) weights += head.row(query_positions[r]);
    weights /= static_cast<double>(attention.size());
    for (size_t c = 0; c < seq.lines.size(); ++c) {
      const auto& line = seq.lines[c];
      int span = std::min(line.end, n) - line.start;
      if (span <= 0) continue;
      out.values(r, c) = weights.segment(line.start, span).mean();
    }
  }
  return out;
}

double lr_at(const AdamConfig& config, long step) {
  if (config.warmup_steps > 0 && step <= config.warmup_steps)
    return config.lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  if (config.total_steps > config.warmup_steps) {
    double frac = static_cast<double>(config.total_steps - step) /
                  static_cast<double>(config.total_steps - config.warmup_steps);
    return config.lr * std::max(0.0, frac);
  }
  return config.lr;
}

AdamState AdamState::init(const ModelParams& params) {
  AdamState s;
  for (const Matrix* m : params.registry()) {
    s.m.push_back(Matrix::Zero(m->rows(), m->cols()));
    s.v.push_back(Matrix::Zero(m->rows(), m->cols()));
  }
  return s;
}

void adam_step(ModelParams& params, GradStore& grads, AdamState& state, const AdamConfig& config,
               long schedule_step) {
  auto tensors = params.registry();
  if (grads.size() != static_cast<int>(tensors.size()) ||
      state.m.size() != tensors.size())
    throw std::invalid_argument("adam_step: mismatched registry sizes");

  double norm = grads.global_norm();
  double clip_scale =
      (config.clip_norm > 0 && norm > config.clip_norm) ? config.clip_norm / norm : 1.0;

  state.t += 1;
  double lr = lr_at(config, schedule_step);
  double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));

  for (size_t i = 0; i < tensors.size(); ++i) {
    Matrix& p = *tensors[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    const Matrix& graw = grads.at(static_cast<int>(i));
    Matrix g = graw.size() ? (graw * clip_scale).eval() : Matrix::Zero(p.rows(), p.cols());
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    Matrix mhat = m / bc1;
    Matrix vhat = v / bc2;
    p.array() -= lr * (mhat.array() / (vhat.array().sqrt() + config.eps));
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'M', 'L', 'I', 'C', 'K', 'P', 'T', '1'};

void write_u32(std::ofstream& out, uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); }
void write_f64(std::ofstream& out, double v) { out.write(reinterpret_cast<char*>(&v), 8); }
void write_str(std::ofstream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t read_u32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
double read_f64(std::ifstream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string read_str(std::ifstream& in) {
  uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open '" + tmp + "'");
    out.write(kMagic, 8);
    write_u32(out, 1);  // format version
    write_u32(out, static_cast<uint32_t>(params.config.dim));
    write_u32(out, static_cast<uint32_t>(params.config.layers));
    write_u32(out, static_cast<uint32_t>(params.config.heads));
    write_u32(out, static_cast<uint32_t>(params.config.max_len));
    write_u32(out, static_cast<uint32_t>(params.config.vocab));
    write_f64(out, params.config.logstd_lo);
    write_f64(out, params.config.logstd_hi);
    write_u32(out, static_cast<uint32_t>(params.config.vocab));
    for (int i = 0; i < params.config.vocab; ++i) write_str(out, tok::token_name(i));
    auto tensors = params.registry();
    auto names = params.registry_names();
    write_u32(out, static_cast<uint32_t>(tensors.size()));
    for (size_t i = 0; i < tensors.size(); ++i) {
      write_str(out, names[i]);
      write_u32(out, static_cast<uint32_t>(tensors[i]->rows()));
      write_u32(out, static_cast<uint32_t>(tensors[i]->cols()));
      out.write(reinterpret_cast<const char*>(tensors[i]->data()),
                static_cast<std::streamsize>(sizeof(double) * tensors[i]->size()));
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("save_checkpoint: rename failed for '" + path + "'");
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in '" + path + "'");
  uint32_t version = read_u32(in);
  if (version != 1) throw std::runtime_error("load_checkpoint: unsupported version");

  ModelConfig cfg;
  cfg.dim = static_cast<int>(read_u32(in));
  cfg.layers = static_cast<int>(read_u32(in));
  cfg.heads = static_cast<int>(read_u32(in));
  cfg.max_len = static_cast<int>(read_u32(in));
  cfg.vocab = static_cast<int>(read_u32(in));
  cfg.logstd_lo = read_f64(in);
  cfg.logstd_hi = read_f64(in);

  uint32_t n_vocab = read_u32(in);
  if (static_cast<int>(n_vocab) != tok::vocab_size())
    throw std::runtime_error("load_checkpoint: vocabulary size mismatch");
  for (uint32_t i = 0; i < n_vocab; ++i) {
    if (read_str(in) != tok::token_name(static_cast<int>(i)))
      throw std::runtime_error("load_checkpoint: vocabulary mismatch at id " + std::to_string(i));
  }

  ModelParams params = ModelParams::init(cfg, 0);
  auto tensors = params.registry();
  auto names = params.registry_names();
  uint32_t n_params = read_u32(in);
  if (n_params != tensors.size())
    throw std::runtime_error("load_checkpoint: tensor count mismatch");
  for (size_t i = 0; i < tensors.size(); ++i) {
    std::string name = read_str(in);
    uint32_t rows = read_u32(in), cols = read_u32(in);
    if (name != names[i] || rows != tensors[i]->rows() || cols != tensors[i]->cols())
      throw std::runtime_error("load_checkpoint: shape mismatch for tensor '" + name + "'");
    in.read(reinterpret_cast<char*>(tensors[i]->data()),
            static_cast<std::streamsize>(sizeof(double) * tensors[i]->size()));
  }
  if (!in) throw std::runtime_error("load_checkpoint: truncated file '" + path + "'");
  return params;
}

}  // namespace mli::nn
