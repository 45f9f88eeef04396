#include "mli/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mli/exec.hpp"
#include "mli/rng.hpp"
#include "mli/text.hpp"

namespace mli::data {

namespace {

// Test splits derive from this fixed seed so the held-out set is identical
// across runs regardless of the corpus seed.
constexpr uint64_t kHeldOutSeed = 0x7e57e57e57e57e5ull;

// One entry per rendered text line; empty string for plate headers.
std::vector<std::string> line_keys(const ast::Program& program, const Trace& trace) {
  std::vector<std::string> keys;
  for (const auto& s : program.statements) {
    if (s.kind == ast::Statement::Kind::Plate) {
      keys.emplace_back();  // header
      if (!trace.minibatch)
        throw std::invalid_argument("line_keys: plated program without minibatch");
      for (int idx : trace.minibatch->indices)
        for (const auto& b : s.body) keys.push_back(member_name(b.target, idx));
    } else {
      keys.push_back(s.target);
    }
  }
  return keys;
}

}  // namespace

double MaskSchedule::inf_rate(long step) const {
  if (total_steps <= 1) return inf_rate_end;
  double frac = std::min(1.0, std::max(0.0, static_cast<double>(step) / (total_steps - 1)));
  return inf_rate_start + (inf_rate_end - inf_rate_start) * frac;
}

std::vector<std::string> assignment_keys(const ast::Program& program, const Trace& trace) {
  std::vector<std::string> out;
  for (const auto& k : line_keys(program, trace))
    if (!k.empty()) out.push_back(k);
  return out;
}

namespace {

MaskedInstance build_views(const ast::Program& program, const Trace& trace,
                           const std::set<std::string>& inf_masks, double mlm_rate, Rng mlm_rng,
                           int max_len) {
  MaskedInstance inst;
  inst.program_name = program.name;

  // Inference view: assignment values replaced by <mask>.
  std::string masked_text = text::render(program, trace, inf_masks);
  inst.inf_tokens = tok::tokenize(masked_text, max_len);
  auto sites = exec::variable_sites(program, trace);
  auto keys = line_keys(program, trace);
  for (size_t li = 0; li < inst.inf_tokens.lines.size(); ++li) {
    const auto& line = inst.inf_tokens.lines[li];
    if (line.annotation_pos < 0) continue;
    if (inst.inf_tokens.ids[line.annotation_pos] != tok::kMask) continue;
    InfTarget t;
    t.pos = line.annotation_pos;
    t.line_index = static_cast<int>(li);
    t.var = line.target;
    t.value = trace.values.at(line.target);
    t.value_type = sites.at(line.target).stmt->value_type;
    inst.inf_targets.push_back(t);
  }

  // MLM view: independent symbolic-token masking over the unmasked text.
  std::string full_text = text::render(program, trace, {});
  inst.mlm_tokens = tok::tokenize(full_text, max_len);
  for (int pos : tok::maskable_positions(inst.mlm_tokens)) {
    if (!mlm_rng.bernoulli(mlm_rate)) continue;
    inst.mlm_targets.push_back({pos, inst.mlm_tokens.ids[pos]});
    inst.mlm_tokens.ids[pos] = tok::kMask;
  }
  return inst;
}

std::set<std::string> draw_inf_masks(const std::vector<std::string>& keys, double rate, Rng& rng) {
  std::set<std::string> masks;
  for (int attempt = 0; attempt < 200; ++attempt) {
    masks.clear();
    for (const auto& k : keys)
      if (rng.bernoulli(rate)) masks.insert(k);
    if (!masks.empty()) return masks;
  }
  masks.insert(keys[rng.uniform_int(0, static_cast<int>(keys.size()) - 1)]);
  return masks;
}

}  // namespace

MaskedInstance mask_views(const ast::Program& program, const Trace& trace, double mlm_rate,
                          double inf_rate, uint64_t seed, int max_len) {
  Rng rng(seed);
  Rng inf_rng = rng.derive("inf");
  auto keys = assignment_keys(program, trace);
  if (keys.empty()) throw std::invalid_argument("mask_views: program has no assignments");
  auto masks = draw_inf_masks(keys, inf_rate, inf_rng);
  MaskedInstance inst = build_views(program, trace, masks, mlm_rate, rng.derive("mlm"), max_len);
  inst.seed = seed;
  return inst;
}

MaskedInstance views_from_masks(const ast::Program& program, const Trace& trace,
                                const std::set<std::string>& inf_masks, double mlm_rate,
                                uint64_t seed, int max_len) {
  MaskedInstance inst =
      build_views(program, trace, inf_masks, mlm_rate, Rng(seed).derive("mlm"), max_len);
  inst.seed = seed;
  return inst;
}

MaskedInstance make_instance(const ast::Program& program, const MaskSchedule& schedule, long step,
                             uint64_t seed, int minibatch_k, int max_len) {
  Rng rng(seed);
  Trace trace = exec::run(program, rng.derive("exec").next_u64(), minibatch_k);
  MaskedInstance inst =
      mask_views(program, trace, schedule.mlm_rate, schedule.inf_rate(step), seed, max_len);
  inst.program_name = program.name;
  return inst;
}

std::vector<const CorpusRecord*> Corpus::split_records(const std::string& split) const {
  std::vector<const CorpusRecord*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

namespace {

CorpusRecord make_record(const ast::Program& base, const BuildConfig& config,
                         const std::string& split, Rng stream, uint64_t rec_seed) {
  for (int attempt = 0;; ++attempt) {
    ast::Program variant = base;
    if (config.augment) {
      variant = aug::random_augment(base, *config.augment,
                                    stream.derive("aug").derive(attempt).next_u64());
      variant.name = base.name;
    }
    try {
      Trace trace = exec::run(variant, stream.derive("exec").derive(attempt).next_u64(),
                              config.minibatch_k);
      auto keys = assignment_keys(variant, trace);
      Rng mask_rng = stream.derive("mask").derive(attempt);
      auto masks = draw_inf_masks(keys, config.record_mask_rate, mask_rng);

      CorpusRecord rec;
      rec.program_name = base.name;
      rec.seed = rec_seed;
      rec.split = split;
      rec.masked_text = text::render(variant, trace, masks);
      tok::tokenize(rec.masked_text, config.max_len);  // length gate
      auto lk = line_keys(variant, trace);
      for (size_t li = 0; li < lk.size(); ++li)
        if (!lk[li].empty() && masks.count(lk[li]))
          rec.targets.push_back({static_cast<int>(li), trace.values.at(lk[li])});
      return rec;
    } catch (const std::exception&) {
      if (attempt >= 50)
        throw std::runtime_error("build_corpus: could not generate a record for program '" +
                                 base.name + "'");
    }
  }
}

}  // namespace

Corpus build_corpus(const std::vector<ast::Program>& programs, const BuildConfig& config) {
  Corpus corpus;
  corpus.schedule = config.schedule;
  corpus.minibatch_k = config.minibatch_k;

  struct SplitSpec {
    const char* name;
    int count;
    uint64_t base_seed;
  };
  const SplitSpec splits[] = {
      {"train", config.n_train_per_program, config.seed},
      {"dev", config.n_dev_per_program, config.seed},
      {"test", config.n_test_per_program, kHeldOutSeed},
  };

  for (size_t pi = 0; pi < programs.size(); ++pi) {
    const ast::Program& p = programs[pi];
    auto violations = ast::validate(p);
    if (!violations.empty())
      throw std::invalid_argument("build_corpus: invalid program '" + p.name +
                                  "': " + violations.front().message);
    corpus.program_names.push_back(p.name);
    for (const auto& split : splits) {
      Rng base = Rng(split.base_seed).derive(split.name).derive(pi);
      for (int i = 0; i < split.count; ++i) {
        Rng stream = base.derive(static_cast<uint64_t>(i));
        uint64_t rec_seed = stream.next_u64();
        corpus.records.push_back(make_record(p, config, split.name, stream, rec_seed));
      }
    }
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_corpus: cannot open '" + path + "'");
  out << "mli-corpus " << corpus.version << "\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "schedule %.17g %.17g %.17g %ld", corpus.schedule.mlm_rate,
                corpus.schedule.inf_rate_start, corpus.schedule.inf_rate_end,
                corpus.schedule.total_steps);
  out << buf << "\n";
  out << "minibatch_k " << corpus.minibatch_k << "\n";
  out << "programs";
  for (const auto& n : corpus.program_names) out << ' ' << n;
  out << "\n";
  for (const auto& r : corpus.records) {
    out << "---\n";
    out << "record " << r.program_name << ' ' << r.seed << ' ' << r.split << "\n";
    int n_lines = static_cast<int>(std::count(r.masked_text.begin(), r.masked_text.end(), '\n'));
    out << "text " << n_lines << "\n" << r.masked_text;
    out << "targets " << r.targets.size() << "\n";
    for (const auto& [line, value] : r.targets) {
      std::snprintf(buf, sizeof buf, "%d %.17g", line, value);
      out << buf << "\n";
    }
  }
  if (!out) throw std::runtime_error("save_corpus: write failed for '" + path + "'");
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_corpus: cannot open '" + path + "'");
  Corpus corpus;
  std::string line, word;

  auto fail = [&](const std::string& msg) -> std::runtime_error {
    return std::runtime_error("load_corpus: " + msg + " in '" + path + "'");
  };

  if (!std::getline(in, line)) throw fail("empty file");
  {
    std::istringstream ls(line);
    ls >> word >> corpus.version;
    if (word != "mli-corpus" || corpus.version != 1) throw fail("bad header");
  }
  if (!std::getline(in, line)) throw fail("missing schedule");
  {
    std::istringstream ls(line);
    ls >> word >> corpus.schedule.mlm_rate >> corpus.schedule.inf_rate_start >>
        corpus.schedule.inf_rate_end >> corpus.schedule.total_steps;
    if (word != "schedule") throw fail("bad schedule line");
  }
  if (!std::getline(in, line)) throw fail("missing minibatch_k");
  {
    std::istringstream ls(line);
    ls >> word >> corpus.minibatch_k;
    if (word != "minibatch_k") throw fail("bad minibatch_k line");
  }
  if (!std::getline(in, line)) throw fail("missing programs");
  {
    std::istringstream ls(line);
    ls >> word;
    if (word != "programs") throw fail("bad programs line");
    while (ls >> word) corpus.program_names.push_back(word);
  }

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line != "---") throw fail("expected record separator");
    CorpusRecord rec;
    if (!std::getline(in, line)) throw fail("truncated record");
    {
      std::istringstream ls(line);
      ls >> word >> rec.program_name >> rec.seed >> rec.split;
      if (word != "record") throw fail("bad record line");
    }
    int n_lines = 0;
    if (!std::getline(in, line)) throw fail("truncated record");
    {
      std::istringstream ls(line);
      ls >> word >> n_lines;
      if (word != "text") throw fail("bad text line");
    }
    for (int i = 0; i < n_lines; ++i) {
      if (!std::getline(in, line)) throw fail("truncated text block");
      rec.masked_text += line;
      rec.masked_text += "\n";
    }
    int n_targets = 0;
    if (!std::getline(in, line)) throw fail("truncated record");
    {
      std::istringstream ls(line);
      ls >> word >> n_targets;
      if (word != "targets") throw fail("bad targets line");
    }
    for (int i = 0; i < n_targets; ++i) {
      if (!std::getline(in, line)) throw fail("truncated targets");
      std::istringstream ls(line);
      int li;
      double v;
      ls >> li >> v;
      rec.targets.push_back({li, v});
    }
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

LoadedRecord rehydrate(const CorpusRecord& record) {
  text::ParseResult parsed = text::parse(record.masked_text);
  LoadedRecord out;
  out.program = parsed.program;
  out.program.name = record.program_name;
  out.trace = parsed.trace;
  out.baked_masks = parsed.trace.masked;
  out.program_name = record.program_name;
  out.split = record.split;
  out.seed = record.seed;

  auto keys = line_keys(out.program, out.trace);
  for (const auto& [line, value] : record.targets) {
    if (line < 0 || line >= static_cast<int>(keys.size()) || keys[line].empty())
      throw std::runtime_error("rehydrate: target line " + std::to_string(line) +
                               " is not an assignment");
    out.trace.values[keys[line]] = value;
  }
  out.trace.masked.clear();
  for (const auto& k : keys)
    if (!k.empty() && !out.trace.values.count(k))
      throw std::runtime_error("rehydrate: missing value for '" + k + "'");
  return out;
}

}  // namespace mli::data
