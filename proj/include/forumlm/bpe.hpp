#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace forumlm {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

struct TokenPair {
  TokenId left;
  TokenId right;

  bool operator==(const TokenPair &) const = default;
};

struct TokenPairHash {
  std::size_t operator()(const TokenPair &p) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t{p.left} << 32) | p.right);
  }
};

using PairCounts = std::unordered_map<TokenPair, std::int64_t, TokenPairHash>;

// Byte-level BPE vocabulary.
//
// Id layout: 0..255 are raw bytes, 256.. are the reserved special tokens,
// then one id per merge in priority order. Special tokens never take part
// in merging.
class Vocabulary {
public:
  static constexpr TokenId kRecordDelimiter = 256;
  static constexpr std::string_view kRecordDelimiterText = "<|record|>";
  static constexpr std::size_t kNumSpecial = 1;
  static constexpr TokenId kFirstMergeId = 256 + kNumSpecial;
  static constexpr int kFileVersion = 1;

  // Byte alphabet and special tokens, no merges.
  Vocabulary();

  // Appends a merge and returns the id of the new token. Both parts must
  // already exist and must not be special tokens.
  TokenId add_merge(TokenPair pair);

  std::size_t size() const { return bytes_.size(); }
  const std::vector<TokenPair> &merges() const { return merges_; }
  bool is_special(TokenId id) const { return id >= 256 && id < kFirstMergeId; }
  bool contains(TokenId id) const { return id < bytes_.size(); }

  // Byte expansion of a token; the printable name for special tokens.
  const std::string &token_bytes(TokenId id) const { return bytes_.at(id); }

  // Id produced by merging `pair`, if that merge exists.
  std::optional<TokenId> merged(TokenPair pair) const;

  // Non-special token whose byte expansion is exactly `bytes`.
  std::optional<TokenId> find(std::string_view bytes) const;

  // Header line then one merge per line as two hex-encoded byte expansions.
  std::string to_file() const;
  static Vocabulary from_file(std::string_view content);

  bool operator==(const Vocabulary &other) const { return merges_ == other.merges_; }

private:
  std::vector<TokenPair> merges_;
  std::vector<std::string> bytes_;
  std::unordered_map<TokenPair, TokenId, TokenPairHash> merge_ids_;
  std::unordered_map<std::string, TokenId> ids_by_bytes_;
};

struct BpeTrainResult {
  Vocabulary vocab;
  std::optional<std::string> warning;
};

// Learns merges over `documents` until the vocabulary holds `target_size`
// tokens or no adjacent pair occurs at least twice. Pairs never span
// document boundaries. Frequencies count every adjacent position
// (overlapping runs included); ties go to the lexicographically smaller
// (left bytes, right bytes). Occurrences are merged left to right.
// A pair whose concatenation already names a token is never merged, so
// byte expansions stay unique.
BpeTrainResult train_bpe(std::span<const std::string> documents, std::size_t target_size);

// Merge ranks applied in priority order to the raw bytes of `text`. Special
// token names inside `text` are encoded as plain bytes.
TokenSequence encode(const Vocabulary &vocab, std::string_view text);

// Parallel over texts.
std::vector<TokenSequence> encode_batch(const Vocabulary &vocab, std::span<const std::string> texts);

// Concatenated byte expansions. Throws ValidationError naming the position
// of an out-of-range id.
std::string decode_bytes(const Vocabulary &vocab, std::span<const TokenId> tokens);

// decode_bytes() made valid UTF-8; a multi-byte character cut by truncation
// becomes U+FFFD.
std::string decode(const Vocabulary &vocab, std::span<const TokenId> tokens);

// Adjacent pair occurrence counts over every sequence. OpenMP-parallel over
// sequences; a serial reference lives in forumlm::reference.
PairCounts count_pairs(std::span<const TokenSequence> sequences);

} // namespace forumlm
