#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace techcoach {

// Lowercases, turns punctuation into spaces, splits on whitespace. Shared by
// the tokenizer, the text metrics, and the hash embedder so "normalized text"
// means one thing everywhere.
std::vector<std::string> tokenize_words(const std::string& text);

// Whitespace tokenizer over a corpus-built vocabulary with dense ids.
class Tokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kMask = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;
    static constexpr int kUnk = 4;
    static constexpr int kNumSpecial = 5;

    static Tokenizer build(const std::vector<std::string>& corpus);
    static Tokenizer from_vocab(std::vector<std::string> vocab);  // checkpoint restore

    int vocab_size() const { return static_cast<int>(vocab_.size()); }
    const std::vector<std::string>& vocab() const { return vocab_; }
    const std::string& token(int id) const { return vocab_.at(static_cast<size_t>(id)); }
    int id_of(const std::string& word) const;  // kUnk when absent

    std::vector<int> encode(const std::string& text) const;  // word ids, no specials added
    std::string decode(const std::vector<int>& ids) const;   // drops pad/mask/bos/eos

private:
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int> index_;
};

// Text-to-vector interface; concrete pretrained encoders plug in behind it.
class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual int dim() const = 0;
    virtual std::vector<double> embed(const std::string& text) const = 0;
};

// Deterministic seeded-hash embedder: each token hashes to a fixed
// pseudo-random vector, a sentence embeds as the mean over its tokens.
// Keeps every test offline while preserving "same text, same vector".
class HashEmbedder : public TextEmbedder {
public:
    explicit HashEmbedder(int dim = 32, uint64_t seed = 0x7357) : dim_(dim), seed_(seed) {}

    int dim() const override { return dim_; }
    std::vector<double> embed(const std::string& text) const override;
    std::vector<double> embed_token(const std::string& word) const;

private:
    int dim_;
    uint64_t seed_;
};

}  // namespace techcoach
