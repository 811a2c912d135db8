#pragma once

#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kmap {

// Splits text into index terms: ASCII letters are case-folded, every byte
// that is not an ASCII letter or digit separates tokens (bytes >= 0x80 are
// kept so UTF-8 words stay whole), tokens shorter than two bytes and
// stopwords are dropped. No stemming.
class Tokenizer {
 public:
  static constexpr std::size_t kMinTokenLength = 2;

  Tokenizer() = default;
  explicit Tokenizer(std::set<std::string> stopwords);

  // Tokens in order of appearance, duplicates kept.
  std::vector<std::string> tokenize(std::string_view text) const;

  // Sorted, unique terms of `text`.
  std::vector<std::string> terms(std::string_view text) const;

  // Query terms pass through the same normalizer. Returns the sorted unique
  // set of tokens produced by all of `raw`.
  std::vector<std::string> normalize_query(std::span<const std::string> raw) const;

  const std::set<std::string>& stopwords() const noexcept { return stopwords_; }

 private:
  std::set<std::string> stopwords_;
};

}  // namespace kmap
