#include "techcoach/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <stdexcept>

#include "techcoach/rng.hpp"

namespace techcoach {

std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || ch == '\'' || ch == '-' || ch == '_') {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

namespace {
const char* kSpecialTokens[Tokenizer::kNumSpecial] = {"[PAD]", "[MASK]", "[BOS]", "[EOS]", "[UNK]"};
}

Tokenizer Tokenizer::build(const std::vector<std::string>& corpus) {
    std::set<std::string> words;
    for (const std::string& s : corpus)
        for (const std::string& w : tokenize_words(s)) words.insert(w);
    std::vector<std::string> vocab;
    vocab.reserve(words.size() + kNumSpecial);
    for (const char* t : kSpecialTokens) vocab.emplace_back(t);
    vocab.insert(vocab.end(), words.begin(), words.end());  // set order = sorted = deterministic
    return from_vocab(std::move(vocab));
}

Tokenizer Tokenizer::from_vocab(std::vector<std::string> vocab) {
    if (static_cast<int>(vocab.size()) < kNumSpecial)
        throw std::runtime_error("tokenizer vocab missing special tokens");
    for (int i = 0; i < kNumSpecial; ++i)
        if (vocab[static_cast<size_t>(i)] != kSpecialTokens[i])
            throw std::runtime_error("tokenizer vocab slot " + std::to_string(i) + " must be " +
                                     kSpecialTokens[i]);
    Tokenizer t;
    t.vocab_ = std::move(vocab);
    for (size_t i = 0; i < t.vocab_.size(); ++i) t.index_[t.vocab_[i]] = static_cast<int>(i);
    return t;
}

int Tokenizer::id_of(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
    std::vector<int> ids;
    for (const std::string& w : tokenize_words(text)) ids.push_back(id_of(w));
    return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kPad || id == kMask || id == kBos || id == kEos) continue;
        if (!out.empty()) out.push_back(' ');
        out += token(id);
    }
    return out;
}

std::vector<double> HashEmbedder::embed_token(const std::string& word) const {
    Rng rng(Rng::mix(seed_, fnv1a64(word)));
    std::vector<double> v(static_cast<size_t>(dim_));
    const double inv = 1.0 / std::sqrt(static_cast<double>(dim_));
    for (double& x : v) x = rng.normal() * inv;
    return v;
}

std::vector<double> HashEmbedder::embed(const std::string& text) const {
    std::vector<double> acc(static_cast<size_t>(dim_), 0.0);
    std::vector<std::string> words = tokenize_words(text);
    if (words.empty()) return acc;
    for (const std::string& w : words) {
        std::vector<double> v = embed_token(w);
        for (int i = 0; i < dim_; ++i) acc[static_cast<size_t>(i)] += v[static_cast<size_t>(i)];
    }
    for (double& x : acc) x /= static_cast<double>(words.size());
    return acc;
}

}  // namespace techcoach
