#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mli/augment.hpp"
#include "mli/ast.hpp"
#include "mli/tokenizer.hpp"
#include "mli/trace.hpp"

namespace mli::data {

// Inference-mask rate ramps linearly from start to end over training.
struct MaskSchedule {
  double mlm_rate = 0.15;
  double inf_rate_start = 0.15;
  double inf_rate_end = 0.50;
  long total_steps = 1;

  double inf_rate(long step) const;
};

struct MlmTarget {
  int pos = 0;
  int token_id = 0;
};

struct InfTarget {
  int pos = 0;         // <mask> token position in inf_tokens
  int line_index = 0;  // line in the rendered text
  std::string var;
  double value = 0.0;
  ast::ValueType value_type = ast::ValueType::Continuous;
};

// Paired views of one execution: x_mlm masks symbolic tokens, x_inf masks
// assignment values.
struct MaskedInstance {
  tok::TokenSeq mlm_tokens;
  std::vector<MlmTarget> mlm_targets;
  tok::TokenSeq inf_tokens;
  std::vector<InfTarget> inf_targets;
  std::string program_name;
  uint64_t seed = 0;
};

// Execute + render + mask. Guarantees at least one inference mask.
MaskedInstance make_instance(const ast::Program& program, const MaskSchedule& schedule, long step,
                             uint64_t seed, int minibatch_k = 0,
                             int max_len = tok::kDefaultMaxLen);

// Masking applied to an existing trace (used for epoch re-masking).
MaskedInstance mask_views(const ast::Program& program, const Trace& trace, double mlm_rate,
                          double inf_rate, uint64_t seed, int max_len = tok::kDefaultMaxLen);

// Views with a predetermined inference-mask set (frozen dev/test masks).
MaskedInstance views_from_masks(const ast::Program& program, const Trace& trace,
                                const std::set<std::string>& inf_masks, double mlm_rate,
                                uint64_t seed, int max_len = tok::kDefaultMaxLen);

// Instance names of assignment lines in render order (plate headers skipped).
std::vector<std::string> assignment_keys(const ast::Program& program, const Trace& trace);

// ---------------------------------------------------------------------------
// Corpus files

struct CorpusRecord {
  std::string program_name;
  uint64_t seed = 0;
  std::string split;  // train / dev / test
  std::string masked_text;
  std::vector<std::pair<int, double>> targets;  // line index -> value
};

struct Corpus {
  int version = 1;
  MaskSchedule schedule;
  int minibatch_k = 0;
  std::vector<std::string> program_names;
  std::vector<CorpusRecord> records;

  std::vector<const CorpusRecord*> split_records(const std::string& split) const;
};

struct BuildConfig {
  int n_train_per_program = 0;
  int n_dev_per_program = 0;
  int n_test_per_program = 0;
  double record_mask_rate = 0.5;  // baked masks used verbatim by dev/test
  int minibatch_k = 0;
  MaskSchedule schedule;
  std::optional<aug::Policy> augment;  // fresh augmented variant per record
  uint64_t seed = 0;
  int max_len = tok::kDefaultMaxLen;
};

// The held-out test split derives from a fixed seed so it stays constant
// across runs; train/dev follow config.seed.
Corpus build_corpus(const std::vector<ast::Program>& programs, const BuildConfig& config);

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

// A record rehydrated for training: program AST, complete trace, and the
// baked mask set.
struct LoadedRecord {
  ast::Program program;
  Trace trace;  // all values filled
  std::set<std::string> baked_masks;
  std::string program_name;
  std::string split;
  uint64_t seed = 0;
};

LoadedRecord rehydrate(const CorpusRecord& record);

// ---------------------------------------------------------------------------
// Built-in programs (toy suite, attention programs, plated IRT).

const std::map<std::string, ast::Program>& builtin_programs();
const ast::Program& builtin(const std::string& name);
const std::vector<std::string>& toy_program_names();  // the six-program suite

}  // namespace mli::data
