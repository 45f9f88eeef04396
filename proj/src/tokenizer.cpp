#include "mli/tokenizer.hpp"

#include <cmath>
#include <limits>
#include <map>

namespace mli::tok {

namespace {

constexpr int kFixedCount = 28;  // specials + punctuation + keywords + dists + fns

const char* kFixed[kFixedCount] = {
    "<pad>", "<bos>", "<mask>", "<num>", "<nl>",
    "~", "=", "->", "(", ")", ",", ":", "[", "]", "+", "*", ">", "==",
    "if", "else", "or", "plate",
    "gaussian", "uniform", "bernoulli",
    "sqrt", "sigmoid", "rosenbrock",
};

std::vector<std::string> build_vocab() {
  std::vector<std::string> v(kFixed, kFixed + kFixedCount);
  for (int i = 0; i < kVarPoolSize; ++i) v.push_back("v" + std::to_string(i));
  for (int i = 1; i <= kIndexPoolSize; ++i) v.push_back("i" + std::to_string(i));
  return v;
}

const std::vector<std::string>& vocab() {
  static const std::vector<std::string> v = build_vocab();
  return v;
}

int fixed_id(const std::string& name) {
  for (int i = 0; i < kFixedCount; ++i)
    if (name == kFixed[i]) return i;
  return -1;
}

constexpr double kNoPayload = std::numeric_limits<double>::quiet_NaN();

}  // namespace

int vocab_size() { return static_cast<int>(vocab().size()); }

const std::string& token_name(int id) { return vocab().at(id); }

int var_token(int pool_slot) {
  if (pool_slot < 0 || pool_slot >= kVarPoolSize)
    throw TokenizeError("variable pool slot out of range");
  return kFixedCount + pool_slot;
}

int index_token(int index) {
  if (index < 1 || index > kIndexPoolSize)
    throw TokenizeError("plate index " + std::to_string(index) + " exceeds the tag pool");
  return kFixedCount + kVarPoolSize + (index - 1);
}

bool is_var_token(int id) { return id >= kFixedCount && id < kFixedCount + kVarPoolSize; }

bool is_index_token(int id) {
  return id >= kFixedCount + kVarPoolSize && id < kFixedCount + kVarPoolSize + kIndexPoolSize;
}

TokenSeq tokenize(const std::string& annotated_text, int max_len) {
  // Parse first: tokenization is only defined for grammatical text.
  text::parse(annotated_text);

  std::vector<text::Lexeme> lex = text::lex(annotated_text);
  TokenSeq seq;
  std::map<std::string, int> pool;  // variable name -> pool slot

  auto var_id = [&](const std::string& name) {
    auto it = pool.find(name);
    if (it != pool.end()) return var_token(it->second);
    int slot = static_cast<int>(pool.size());
    if (slot >= kVarPoolSize) throw TokenizeError("variable pool exhausted (max 64 names)");
    pool[name] = slot;
    seq.var_pool.push_back(name);
    return var_token(slot);
  };

  auto push = [&](int id, double payload = kNoPayload) {
    seq.ids.push_back(id);
    seq.payloads.push_back(payload);
  };

  push(kBos);
  LineInfo line;
  line.start = 1;
  bool line_has_tokens = false;
  bool after_arrow = false;
  int bracket_depth = 0;

  auto flush_line = [&] {
    line.end = seq.length();
    seq.lines.push_back(line);
    line = LineInfo{};
    line.start = seq.length();
    line_has_tokens = false;
    after_arrow = false;
    bracket_depth = 0;
  };

  for (const auto& lx : lex) {
    if (lx.kind == text::Tok::End) break;
    if (lx.kind == text::Tok::Newline) {
      if (line_has_tokens) {
        push(kNewline);
        flush_line();
      }
      continue;
    }
    switch (lx.kind) {
      case text::Tok::Ident: {
        int fid = fixed_id(lx.text);
        if (fid >= 0) {
          push(fid);
        } else {
          if (!line_has_tokens) line.target = lx.text;  // statement target
          push(var_id(lx.text));
        }
        break;
      }
      case text::Tok::Number:
        // Plate indices inside brackets become index tags; every other
        // literal (including the plate header total) is a <num> payload.
        if (bracket_depth > 0)
          push(index_token(static_cast<int>(lx.value)));
        else
          push(kNum, lx.value);
        if (after_arrow) line.annotation_pos = seq.length() - 1;
        break;
      case text::Tok::Mask:
        push(kMask);
        if (after_arrow) line.annotation_pos = seq.length() - 1;
        break;
      case text::Tok::Arrow:
        push(fixed_id("->"));
        after_arrow = true;
        break;
      case text::Tok::LBracket:
        push(fixed_id("["));
        ++bracket_depth;
        break;
      case text::Tok::RBracket:
        push(fixed_id("]"));
        --bracket_depth;
        break;
      default:
        push(fixed_id(lx.text));
        break;
    }
    line_has_tokens = true;
  }
  if (line_has_tokens) {
    push(kNewline);
    flush_line();
  }

  // Fix up member-instance targets ("d" -> "d[3]") and clear plate headers.
  for (auto& li : seq.lines) {
    if (seq.ids[li.start] == fixed_id("plate")) {
      li.target.clear();
      li.annotation_pos = -1;
      continue;
    }
    if (li.start + 1 < li.end && seq.ids[li.start + 1] == fixed_id("[")) {
      int index = seq.ids[li.start + 2] - (kFixedCount + kVarPoolSize) + 1;
      li.target = member_name(li.target, index);
    }
  }

  if (seq.length() > max_len)
    throw TokenizeError("sequence length " + std::to_string(seq.length()) +
                        " exceeds the maximum of " + std::to_string(max_len));
  return seq;
}

std::string detokenize(const TokenSeq& seq) {
  const int lparen = fixed_id("(");
  const int rparen = fixed_id(")");
  const int comma = fixed_id(",");
  const int colon = fixed_id(":");
  const int lbracket = fixed_id("[");
  const int rbracket = fixed_id("]");
  const int plate_tok = fixed_id("plate");

  auto callable = [&](int id) {
    const std::string& n = token_name(id);
    return id == plate_tok || n == "gaussian" || n == "uniform" || n == "bernoulli" ||
           n == "sqrt" || n == "sigmoid" || n == "rosenbrock";
  };

  std::string out;
  bool at_line_start = true;
  int prev = -1;
  for (int i = 0; i < seq.length(); ++i) {
    int id = seq.ids[i];
    if (id == kPad) break;
    if (id == kBos) continue;
    if (id == kNewline) {
      out += '\n';
      at_line_start = true;
      prev = id;
      continue;
    }

    std::string piece;
    if (id == kNum) {
      piece = text::format_number(seq.payloads[i]);
    } else if (is_var_token(id)) {
      piece = seq.var_pool.at(id - kFixedCount);
    } else if (is_index_token(id)) {
      piece = std::to_string(id - (kFixedCount + kVarPoolSize) + 1);
    } else {
      piece = token_name(id);
    }

    if (at_line_start) {
      // Member lines (target followed by '[') carry a two-space indent.
      if (is_var_token(id) && i + 1 < seq.length() && seq.ids[i + 1] == lbracket) out += "  ";
      out += piece;
      at_line_start = false;
      prev = id;
      continue;
    }

    bool no_space = id == rparen || id == comma || id == colon || id == lbracket ||
                    id == rbracket || prev == lbracket || prev == lparen ||
                    (id == lparen && callable(prev));
    if (!no_space) out += ' ';
    out += piece;
    prev = id;
  }
  return out;
}

std::vector<int> maskable_positions(const TokenSeq& seq) {
  std::vector<int> out;
  for (int i = 0; i < seq.length(); ++i) {
    int id = seq.ids[i];
    if (id == kPad || id == kBos || id == kMask || id == kNum) continue;
    out.push_back(i);
  }
  return out;
}

}  // namespace mli::tok
