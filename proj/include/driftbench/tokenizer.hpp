#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace driftbench {

using TokenId = std::int32_t;

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  // Identity of the vocabulary; part of every tokenization cache key.
  virtual std::string provider_id() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual TokenId mask_token_id() const = 0;
  virtual std::string mask_token() const = 0;

  virtual std::vector<TokenId> encode(std::string_view text, bool add_prefix_space) = 0;
  // Word-initial pieces decode with a leading space (byte-level BPE convention).
  virtual std::string decode(std::span<const TokenId> ids) = 0;
};

// Whitespace tokenizer over a fixed vocabulary. Each whitespace-separated word
// is split greedily into the longest vocabulary pieces: the first piece from
// plain entries, later pieces from "##"-prefixed continuation entries. The mask
// token is always a piece of its own. Words that cannot be covered map to the
// unknown token. add_prefix_space has no effect.
class FixtureTokenizer : public Tokenizer {
 public:
  FixtureTokenizer(std::vector<std::string> vocab, std::string mask_token,
                   std::string unk_token = "<unk>", std::string provider = "fixture");

  // Plain-text vocabulary: one token per line; mask and unknown tokens are
  // "<mask>" and "<unk>".
  static FixtureTokenizer from_vocab_file(const std::filesystem::path& path);

  std::string provider_id() const override { return provider_; }
  std::size_t vocab_size() const override { return vocab_.size(); }
  TokenId mask_token_id() const override { return mask_id_; }
  std::string mask_token() const override { return mask_token_; }

  std::vector<TokenId> encode(std::string_view text, bool add_prefix_space) override;
  std::string decode(std::span<const TokenId> ids) override;

  const std::vector<std::string>& vocab() const { return vocab_; }
  // -1 if absent.
  TokenId id_of(std::string_view piece) const;

 private:
  void encode_word(std::string_view word, std::vector<TokenId>& out) const;

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> index_;
  std::string mask_token_;
  std::string unk_token_;
  std::string provider_;
  TokenId mask_id_ = -1;
  TokenId unk_id_ = -1;
  std::size_t longest_piece_ = 0;
};

// Memoizes encode() by (provider, prefix flag, text). Safe for concurrent use.
class CachingTokenizer : public Tokenizer {
 public:
  explicit CachingTokenizer(std::shared_ptr<Tokenizer> inner) : inner_(std::move(inner)) {}

  std::string provider_id() const override { return inner_->provider_id(); }
  std::size_t vocab_size() const override { return inner_->vocab_size(); }
  TokenId mask_token_id() const override { return inner_->mask_token_id(); }
  std::string mask_token() const override { return inner_->mask_token(); }

  std::vector<TokenId> encode(std::string_view text, bool add_prefix_space) override;
  std::string decode(std::span<const TokenId> ids) override { return inner_->decode(ids); }

  std::size_t hits() const;

 private:
  std::shared_ptr<Tokenizer> inner_;
  mutable std::mutex mu_;
  std::map<std::tuple<std::string, bool, std::string>, std::vector<TokenId>> cache_;
  std::size_t hits_ = 0;
};

std::string trim(std::string_view s);

}  // namespace driftbench
