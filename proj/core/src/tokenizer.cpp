#include "ssacl/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace ssacl {

Tokenizer::Tokenizer(std::vector<std::string> words) {
  id_to_word_ = {"<pad>", "<unk>", "<bos>", "<eos>"};
  std::set<std::string> uniq;
  for (auto& w : words) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (!w.empty()) uniq.insert(w);
  }
  for (const auto& w : uniq) id_to_word_.push_back(w);
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(id_to_word_.size()); ++i) {
    word_to_id_[id_to_word_[i]] = i;
  }
}

std::vector<std::string> Tokenizer::split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string w;
  while (ss >> w) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    while (!w.empty() && (w.back() == '.' || w.back() == ',')) {
      const char p = w.back();
      w.pop_back();
      if (!w.empty()) out.push_back(w);
      out.emplace_back(1, p);
      w.clear();
    }
    if (!w.empty()) out.push_back(w);
  }
  return out;
}

std::vector<std::int64_t> Tokenizer::encode(const std::string& text) const {
  std::vector<std::int64_t> ids;
  for (const auto& w : split_words(text)) ids.push_back(word_id(w));
  return ids;
}

std::string Tokenizer::decode(const std::vector<std::int64_t>& ids) const {
  std::string out;
  for (auto id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    const auto& w = id_word(id);
    if (w == "." || w == ",") {
      out += w;
    } else {
      if (!out.empty()) out += ' ';
      out += w;
    }
  }
  return out;
}

std::int64_t Tokenizer::word_id(const std::string& word) const {
  auto it = word_to_id_.find(word);
  return it == word_to_id_.end() ? kUnk : it->second;
}

const std::string& Tokenizer::id_word(std::int64_t id) const {
  static const std::string unk = "<unk>";
  if (id < 0 || id >= vocab_size()) return unk;
  return id_to_word_[static_cast<std::size_t>(id)];
}

torch::Tensor Tokenizer::batch_encode(const std::vector<std::string>& texts, bool add_specials,
                                      std::int64_t max_len) const {
  std::vector<std::vector<std::int64_t>> rows;
  std::int64_t longest = 1;
  for (const auto& t : texts) {
    auto ids = encode(t);
    if (add_specials) {
      ids.insert(ids.begin(), kBos);
      ids.push_back(kEos);
    }
    if (max_len > 0 && static_cast<std::int64_t>(ids.size()) > max_len) {
      ids.resize(static_cast<std::size_t>(max_len));
    }
    longest = std::max<std::int64_t>(longest, static_cast<std::int64_t>(ids.size()));
    rows.push_back(std::move(ids));
  }
  auto out = torch::full({static_cast<std::int64_t>(rows.size()), longest}, kPad, torch::kLong);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    for (std::size_t i = 0; i < rows[b].size(); ++i) {
      out[static_cast<std::int64_t>(b)][static_cast<std::int64_t>(i)] = rows[b][i];
    }
  }
  return out;
}

}  // namespace ssacl
