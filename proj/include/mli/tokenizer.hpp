#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mli/text.hpp"

namespace mli::tok {

// Closed vocabulary over the program grammar. Numeric literals share one
// <num> id and carry their value as a payload; variable names map into a
// fixed pool by first appearance (declaration order under SSA).
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kMask = 2;
inline constexpr int kNum = 3;
inline constexpr int kNewline = 4;

inline constexpr int kVarPoolSize = 64;
inline constexpr int kIndexPoolSize = 64;
inline constexpr int kDefaultMaxLen = 256;

int vocab_size();
const std::string& token_name(int id);      // e.g. "v3", "gaussian", "<num>"
int var_token(int pool_slot);               // pool slot -> vocab id
int index_token(int index);                 // 1-based plate index -> vocab id
bool is_var_token(int id);
bool is_index_token(int id);

struct TokenizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LineInfo {
  int start = 0;          // first token of the line
  int end = 0;            // one past the line's <nl>
  std::string target;     // instance name ("z1", "d[3]"); empty for plate headers
  int annotation_pos = -1;  // token index of the value / <mask> slot; -1 for headers
};

struct TokenSeq {
  std::vector<int> ids;
  std::vector<double> payloads;        // NaN except at <num> positions
  std::vector<std::string> var_pool;   // pool slot -> original variable name
  std::vector<LineInfo> lines;

  int length() const { return static_cast<int>(ids.size()); }
};

// Annotated program text -> token sequence. The text must parse under the
// program grammar; sequences longer than max_len are an error.
TokenSeq tokenize(const std::string& annotated_text, int max_len = kDefaultMaxLen);

// Exact inverse on canonical text.
std::string detokenize(const TokenSeq& seq);

// Positions eligible for MLM masking: symbolic tokens only (never <bos>,
// <pad>, <num> payload slots, or existing <mask> tokens).
std::vector<int> maskable_positions(const TokenSeq& seq);

}  // namespace mli::tok
