#include "driftbench/tokenizer.hpp"

#include <fstream>

#include "driftbench/errors.hpp"

namespace driftbench {

namespace {

constexpr std::string_view kContinuation = "##";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

FixtureTokenizer::FixtureTokenizer(std::vector<std::string> vocab, std::string mask_token,
                                   std::string unk_token, std::string provider)
    : vocab_(std::move(vocab)),
      mask_token_(std::move(mask_token)),
      unk_token_(std::move(unk_token)),
      provider_(std::move(provider)) {
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (vocab_[i].empty()) throw LoadError("empty vocabulary entry", i + 1);
    if (!index_.emplace(vocab_[i], static_cast<TokenId>(i)).second) {
      throw LoadError("duplicate vocabulary entry '" + vocab_[i] + "'", i + 1);
    }
    longest_piece_ = std::max(longest_piece_, vocab_[i].size());
  }
  mask_id_ = id_of(mask_token_);
  unk_id_ = id_of(unk_token_);
  if (mask_id_ < 0) throw LoadError("vocabulary lacks mask token '" + mask_token_ + "'");
}

FixtureTokenizer FixtureTokenizer::from_vocab_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open vocabulary " + path.string());
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) vocab.push_back(line);
  }
  return FixtureTokenizer(std::move(vocab), "<mask>", "<unk>", "fixture:" + path.filename().string());
}

TokenId FixtureTokenizer::id_of(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  return it == index_.end() ? -1 : it->second;
}

void FixtureTokenizer::encode_word(std::string_view word, std::vector<TokenId>& out) const {
  // The mask token never merges with its neighbours.
  bool initial = true;
  while (!word.empty()) {
    auto m = word.find(mask_token_);
    std::string_view segment = word.substr(0, m);
    std::vector<TokenId> pieces;
    bool ok = true;
    std::size_t pos = 0;
    while (pos < segment.size()) {
      bool first = initial && pos == 0;
      TokenId found = -1;
      std::size_t len = std::min(longest_piece_, segment.size() - pos);
      for (; len > 0; --len) {
        std::string candidate = first ? std::string(segment.substr(pos, len))
                                      : std::string(kContinuation) + std::string(segment.substr(pos, len));
        if (auto id = id_of(candidate); id >= 0 && id != mask_id_) {
          found = id;
          break;
        }
      }
      if (found < 0) {
        ok = false;
        break;
      }
      pieces.push_back(found);
      pos += len;
    }
    if (!segment.empty()) {
      if (ok) {
        out.insert(out.end(), pieces.begin(), pieces.end());
      } else if (unk_id_ >= 0) {
        out.push_back(unk_id_);
      } else {
        throw std::invalid_argument("cannot tokenize '" + std::string(segment) + "'");
      }
    }
    if (m == std::string_view::npos) break;
    out.push_back(mask_id_);
    word.remove_prefix(m + mask_token_.size());
    initial = false;
  }
}

std::vector<TokenId> FixtureTokenizer::encode(std::string_view text, bool /*add_prefix_space*/) {
  std::vector<TokenId> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) encode_word(text.substr(i, j - i), out);
    i = j;
  }
  return out;
}

std::string FixtureTokenizer::decode(std::span<const TokenId> ids) {
  std::string out;
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
    }
    const auto& piece = vocab_[static_cast<std::size_t>(id)];
    if (piece.size() > kContinuation.size() && piece.starts_with(kContinuation)) {
      out += piece.substr(kContinuation.size());
    } else {
      out += ' ';
      out += piece;
    }
  }
  return out;
}

std::vector<TokenId> CachingTokenizer::encode(std::string_view text, bool add_prefix_space) {
  auto key = std::make_tuple(inner_->provider_id(), add_prefix_space, std::string(text));
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      ++hits_;
      return it->second;
    }
  }
  auto ids = inner_->encode(text, add_prefix_space);
  std::lock_guard lock(mu_);
  cache_.emplace(std::move(key), ids);
  return ids;
}

std::size_t CachingTokenizer::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

}  // namespace driftbench
