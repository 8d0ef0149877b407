#include "scout/tasks.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include "scout/rng.hpp"

namespace scout {

namespace vocab {

int digit(int d) {
  if (d < 0 || d > 9) throw std::invalid_argument("vocab: digit out of range");
  return kDigit0 + d;
}

int letter(char c) {
  if (c < 'a' || c > 'z') throw std::invalid_argument("vocab: letter out of range");
  return kLetterA + (c - 'a');
}

char token_char(int id) {
  if (id >= kDigit0 && id < kDigit0 + 10) return static_cast<char>('0' + id - kDigit0);
  if (id >= kLetterA && id < kLetterA + 26) return static_cast<char>('a' + id - kLetterA);
  switch (id) {
    case kPlus: return '+';
    case kMinus: return '-';
    case kEquals: return '=';
    case kReverseMark: return '>';
    case kCopyMark: return '#';
    case kPad: return '.';
    case kBos: return '^';
    case kEos: return '$';
  }
  throw std::invalid_argument("vocab: unknown token id " + std::to_string(id));
}

std::vector<int> encode(std::string_view text) {
  std::vector<int> out;
  for (char c : text) {
    if (c == ' ') continue;
    if (c >= '0' && c <= '9') {
      out.push_back(digit(c - '0'));
    } else if (c >= 'a' && c <= 'z') {
      out.push_back(letter(c));
    } else if (c == '+') {
      out.push_back(kPlus);
    } else if (c == '-') {
      out.push_back(kMinus);
    } else if (c == '=') {
      out.push_back(kEquals);
    } else if (c == '>') {
      out.push_back(kReverseMark);
    } else if (c == '#') {
      out.push_back(kCopyMark);
    } else if (c == '^') {
      out.push_back(kBos);
    } else if (c == '$') {
      out.push_back(kEos);
    } else {
      throw std::invalid_argument(std::string("vocab: cannot encode character '") +
                                  c + "'");
    }
  }
  return out;
}

std::string decode(std::span<const int> tokens) {
  std::string out;
  for (int t : tokens) out.push_back(token_char(t));
  return out;
}

}  // namespace vocab

void TaskSpec::validate() const {
  if (name != "mod_add" && name != "multi_digit" && name != "reverse" &&
      name != "copy") {
    throw std::invalid_argument("[data] unknown task '" + name +
                                "' (expected mod_add, multi_digit, reverse or copy)");
  }
  if (name == "mod_add") {
    if (modulus < 2) throw std::invalid_argument("[data] modulus must be at least 2");
    const std::size_t universe = modulus * modulus;
    if (train_size + dev_size + test_size > universe) {
      throw std::invalid_argument(
          "[data] splits need " + std::to_string(train_size + dev_size + test_size) +
          " distinct pairs but the task only has " + std::to_string(universe));
    }
  }
  if (name == "multi_digit" && (max_digits == 0 || max_digits > 6)) {
    throw std::invalid_argument("[data] max_digits must be in 1..6");
  }
  if ((name == "reverse" || name == "copy") && payload_len == 0) {
    throw std::invalid_argument("[data] payload_len must be positive");
  }
}

namespace {

void append_number(std::vector<int>& tokens, std::size_t value) {
  const std::string s = std::to_string(value);
  for (char c : s) tokens.push_back(vocab::digit(c - '0'));
}

Example make_mod_add_example(std::size_t a, std::size_t b, std::size_t p) {
  Example ex;
  ex.tokens.push_back(vocab::kBos);
  append_number(ex.tokens, a);
  ex.tokens.push_back(vocab::kPlus);
  append_number(ex.tokens, b);
  ex.tokens.push_back(vocab::kEquals);
  ex.answer_begin = ex.tokens.size();
  append_number(ex.tokens, (a + b) % p);
  ex.tokens.push_back(vocab::kEos);
  return ex;
}

Example make_multi_digit_example(std::size_t a, std::size_t b, bool subtract) {
  if (subtract && b > a) std::swap(a, b);  // keep answers nonnegative
  Example ex;
  ex.tokens.push_back(vocab::kBos);
  append_number(ex.tokens, a);
  ex.tokens.push_back(subtract ? vocab::kMinus : vocab::kPlus);
  append_number(ex.tokens, b);
  ex.tokens.push_back(vocab::kEquals);
  ex.answer_begin = ex.tokens.size();
  append_number(ex.tokens, subtract ? a - b : a + b);
  ex.tokens.push_back(vocab::kEos);
  return ex;
}

Example make_sequence_example(const std::vector<int>& payload, bool reverse) {
  Example ex;
  ex.tokens.push_back(vocab::kBos);
  ex.tokens.insert(ex.tokens.end(), payload.begin(), payload.end());
  ex.tokens.push_back(reverse ? vocab::kReverseMark : vocab::kCopyMark);
  ex.answer_begin = ex.tokens.size();
  if (reverse) {
    ex.tokens.insert(ex.tokens.end(), payload.rbegin(), payload.rend());
  } else {
    ex.tokens.insert(ex.tokens.end(), payload.begin(), payload.end());
  }
  ex.tokens.push_back(vocab::kEos);
  return ex;
}

struct SplitRange {
  std::size_t begin = 0;
  std::size_t count = 0;
};

SplitRange split_range(const TaskSpec& spec, std::string_view split) {
  if (split == "train") return {0, spec.train_size};
  if (split == "dev") return {spec.train_size, spec.dev_size};
  if (split == "test") return {spec.train_size + spec.dev_size, spec.test_size};
  throw std::invalid_argument("unknown split '" + std::string(split) +
                              "' (expected train, dev or test)");
}

}  // namespace

std::size_t TaskSpec::max_sequence_length() const {
  if (name == "mod_add") {
    const std::size_t digits = std::to_string(modulus - 1).size();
    const std::size_t sum_digits = std::to_string(2 * (modulus - 1)).size();
    return 1 + digits + 1 + digits + 1 + sum_digits + 1;
  }
  if (name == "multi_digit") {
    std::size_t max_val = 1;
    for (std::size_t i = 0; i < max_digits; ++i) max_val *= 10;
    const std::size_t sum_digits = std::to_string(2 * (max_val - 1)).size();
    return 1 + max_digits + 1 + max_digits + 1 + sum_digits + 1;
  }
  return 1 + payload_len + 1 + payload_len + 1;
}

std::size_t Dataset::max_len() const {
  std::size_t m = 0;
  for (const auto& ex : examples) m = std::max(m, ex.tokens.size());
  return m;
}

std::uint64_t Dataset::checksum() const {
  std::uint64_t h = fnv1a(task_name.data(), task_name.size());
  for (const auto& ex : examples) {
    h = fnv1a(ex.tokens.data(), ex.tokens.size() * sizeof(int), h);
    h = fnv1a(&ex.answer_begin, sizeof(ex.answer_begin), h);
  }
  return h;
}

Dataset generate_dataset(const TaskSpec& spec, std::string_view split) {
  spec.validate();
  const SplitRange range = split_range(spec, split);
  Dataset out;
  out.task_name = spec.name;
  out.split = std::string(split);
  out.examples.reserve(range.count);

  Rng rng = Rng::stream(spec.split_seed, "task/" + spec.name);

  if (spec.name == "mod_add") {
    const std::size_t p = spec.modulus;
    std::vector<std::size_t> keys(p * p);
    for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = i;
    // Fisher-Yates with the task stream; splits are consecutive slices.
    for (std::size_t i = keys.size() - 1; i > 0; --i) {
      std::swap(keys[i], keys[rng.below(i + 1)]);
    }
    for (std::size_t i = 0; i < range.count; ++i) {
      const std::size_t key = keys.at(range.begin + i);
      out.examples.push_back(make_mod_add_example(key / p, key % p, p));
    }
    return out;
  }

  // Sampled tasks: draw distinct keys from the stream, deal them to splits
  // in order, so train/dev/test never share a key.
  const std::size_t total = spec.train_size + spec.dev_size + spec.test_size;
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(total * 2);
  std::size_t produced = 0;
  while (produced < range.begin + range.count) {
    Example ex;
    std::uint64_t key = 0;
    if (spec.name == "multi_digit") {
      std::size_t max_val = 1;
      for (std::size_t i = 0; i < spec.max_digits; ++i) max_val *= 10;
      const std::size_t a = rng.below(max_val);
      const std::size_t b = rng.below(max_val);
      const bool subtract = rng.below(2) == 1;
      key = (static_cast<std::uint64_t>(a) * max_val + b) * 2 + (subtract ? 1 : 0);
      if (!seen.insert(key).second) continue;
      ex = make_multi_digit_example(a, b, subtract);
    } else {
      std::vector<int> payload(spec.payload_len);
      key = 0xad0b1ull;
      for (auto& t : payload) {
        t = vocab::kLetterA + static_cast<int>(rng.below(26));
        key = key * 31 + static_cast<std::uint64_t>(t);
      }
      if (!seen.insert(key).second) continue;
      ex = make_sequence_example(payload, spec.name == "reverse");
    }
    if (produced >= range.begin) out.examples.push_back(std::move(ex));
    ++produced;
  }
  return out;
}

}  // namespace scout
