#pragma once

#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace ssacl {

// Word-level tokenizer over the synthetic vocabulary. Lowercases, splits on
// whitespace and separates sentence-final periods. OOV words map to <unk>.
class Tokenizer {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kUnk = 1;
  static constexpr std::int64_t kBos = 2;
  static constexpr std::int64_t kEos = 3;

  Tokenizer() = default;
  explicit Tokenizer(std::vector<std::string> words);  // deduped, sorted internally

  static std::vector<std::string> split_words(const std::string& text);

  std::vector<std::int64_t> encode(const std::string& text) const;
  std::string decode(const std::vector<std::int64_t>& ids) const;  // skips specials

  std::int64_t word_id(const std::string& word) const;  // kUnk when absent
  const std::string& id_word(std::int64_t id) const;

  std::int64_t vocab_size() const { return static_cast<std::int64_t>(id_to_word_.size()); }
  const std::vector<std::string>& vocab() const { return id_to_word_; }

  // Pads a batch of token id sequences to a [B, L] tensor (pad id 0), with
  // <bos>/<eos> wrapping when requested.
  torch::Tensor batch_encode(const std::vector<std::string>& texts, bool add_specials,
                             std::int64_t max_len) const;

 private:
  std::vector<std::string> id_to_word_;
  std::map<std::string, std::int64_t> word_to_id_;
};

}  // namespace ssacl
