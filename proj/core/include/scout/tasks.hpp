#pragma once
// Synthetic reasoning tasks. All tasks share one character-level vocabulary
// so a single teacher ladder serves every task. Splits are disjoint under the
// generator's key and fully determined by the split seed.
//
// Formats (answer = everything after '=' or the task marker, eos included):
//   mod_add:     <bos> a + b =  ((a+b) mod p)        <eos>
//   multi_digit: <bos> a ± b =  (a±b, nonnegative)   <eos>
//   reverse:     <bos> payload > reversed(payload)   <eos>
//   copy:        <bos> payload # payload             <eos>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace scout {

// Fixed vocabulary: pad, bos, eos, digits 0-9, '+', '-', '=', '>', '#',
// letters a-z. 45 tokens total.
namespace vocab {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kDigit0 = 3;  // 3..12
inline constexpr int kPlus = 13;
inline constexpr int kMinus = 14;
inline constexpr int kEquals = 15;
inline constexpr int kReverseMark = 16;
inline constexpr int kCopyMark = 17;
inline constexpr int kLetterA = 18;  // 18..43
inline constexpr std::size_t kSize = 44;

int digit(int d);
int letter(char c);
// Character-level encoding for CLI prompts; spaces are skipped, unknown
// characters rejected.
std::vector<int> encode(std::string_view text);
std::string decode(std::span<const int> tokens);
char token_char(int id);
}  // namespace vocab

struct TaskSpec {
  std::string name = "mod_add";  // mod_add | multi_digit | reverse | copy
  std::size_t modulus = 97;      // mod_add
  std::size_t max_digits = 3;    // multi_digit operand width
  std::size_t payload_len = 6;   // reverse / copy payload length
  std::size_t train_size = 6000;
  std::size_t dev_size = 1000;
  std::size_t test_size = 1000;
  std::uint64_t split_seed = 0;

  void validate() const;
  // Longest sequence this spec can emit (for max_seq_len sizing).
  std::size_t max_sequence_length() const;
};

struct Example {
  std::vector<int> tokens;
  std::size_t answer_begin = 0;  // answer spans [answer_begin, tokens.size())
};

struct Dataset {
  std::string task_name;
  std::string split;
  std::vector<Example> examples;

  std::size_t max_len() const;
  std::uint64_t checksum() const;
};

// split is "train", "dev" or "test".
Dataset generate_dataset(const TaskSpec& spec, std::string_view split);

}  // namespace scout
