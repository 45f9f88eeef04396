#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mli/ast.hpp"
#include "mli/autograd.hpp"
#include "mli/rng.hpp"
#include "mli/tokenizer.hpp"

namespace mli::nn {

struct ModelConfig {
  int dim = 128;
  int layers = 4;
  int heads = 4;
  int max_len = 256;
  int vocab = 0;  // filled from the tokenizer when 0
  double logstd_lo = -7.0;
  double logstd_hi = 3.0;
};

// Output distribution for one masked assignment.
struct Posterior {
  ast::ValueType type = ast::ValueType::Continuous;
  double mean = 0.0;
  double std = 1.0;
  double prob = 0.5;

  double log_density(double value) const;
  double sample(Rng& rng) const;
};

struct ModelParams {
  ModelConfig config;

  Matrix tok_emb, pos_emb, num_w, num_b;
  struct Layer {
    Matrix ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  std::vector<Layer> layers;
  Matrix lnf_g, lnf_b;
  Matrix mlm_w, mlm_b;
  Matrix inf_w, inf_b;  // d×2: mean, log-std
  Matrix bin_w, bin_b;  // d×1: logit

  // Gaussian(0, 0.02) weights, unit layer-norm gains, zero biases; the
  // inference heads start at zero so the untrained posterior is N(0,1).
  static ModelParams init(ModelConfig config, uint64_t seed);

  std::vector<Matrix*> registry();
  std::vector<const Matrix*> registry() const;
  std::vector<std::string> registry_names() const;
  long scalar_count() const;
};

struct EncodeNodes {
  int final_node = -1;            // n×d contextual vectors
  std::vector<Matrix> attention;  // last layer: heads × (n×n)
  int valid_len = 0;              // tokens before the <pad> suffix
};

// Builds the encoder forward pass on the tape. sink may be null for
// forward-only use. Throws on non-finite activations (with layer index)
// and on over-length input.
EncodeNodes encode_on_tape(Tape& tape, const ModelParams& params, const tok::TokenSeq& seq,
                           GradStore* sink);

struct Encoded {
  Matrix vectors;                 // n×d
  std::vector<Matrix> attention;  // last layer per head
};
Encoded encode(const ModelParams& params, const tok::TokenSeq& seq);

struct HeadNodes {
  int mlm_logits = -1;   // m_mlm × |V|
  int cont_mean = -1;    // m_cont × 1
  int cont_logstd = -1;  // clamped
  int bin_logits = -1;   // m_bin × 1
};
HeadNodes heads_on_tape(Tape& tape, const ModelParams& params, int final_node,
                        const std::vector<int>& mlm_positions,
                        const std::vector<int>& cont_positions,
                        const std::vector<int>& bin_positions, GradStore* sink);

// Forward-only posteriors for the given (position, value_type) queries.
std::vector<Posterior> query_posteriors(const ModelParams& params, const tok::TokenSeq& seq,
                                        const std::vector<std::pair<int, ast::ValueType>>& queries);

// Mean last-layer attention per program line for every masked assignment,
// heads averaged, one row per masked variable in declaration order.
struct AttentionSummary {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  Matrix values;
};
AttentionSummary attention_line_summary(const std::vector<Matrix>& attention,
                                        const tok::TokenSeq& seq);

// ---------------------------------------------------------------------------
// Optimizer: Adam with linear warmup then linear decay and a global
// gradient-norm clip.

struct AdamConfig {
  double lr = 4e-3;
  long warmup_steps = 5000;
  long total_steps = 0;  // 0: no decay phase
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;
};

double lr_at(const AdamConfig& config, long step);

struct AdamState {
  std::vector<Matrix> m, v;
  long t = 0;
  static AdamState init(const ModelParams& params);
};

void adam_step(ModelParams& params, GradStore& grads, AdamState& state, const AdamConfig& config,
               long schedule_step);

// ---------------------------------------------------------------------------
// Versioned binary checkpoints; load rejects config or vocabulary mismatches.

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace mli::nn
