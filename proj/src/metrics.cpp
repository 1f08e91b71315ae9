#include "techcoach/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace techcoach {

namespace {

// ---- Porter stemmer helpers -------------------------------------------------
// 'y' counts as a consonant at the start of a word or after a vowel.

bool is_consonant(const std::string& w, size_t i) {
    char c = w[i];
    if (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') return false;
    if (c == 'y') return i == 0 ? true : !is_consonant(w, i - 1);
    return true;
}

// Number of vowel-consonant sequences in [C](VC)^m[V].
int measure(const std::string& stem) {
    int m = 0;
    bool in_vowel = false;
    for (size_t i = 0; i < stem.size(); ++i) {
        if (!is_consonant(stem, i)) {
            in_vowel = true;
        } else if (in_vowel) {
            ++m;
            in_vowel = false;
        }
    }
    return m;
}

bool contains_vowel(const std::string& stem) {
    for (size_t i = 0; i < stem.size(); ++i)
        if (!is_consonant(stem, i)) return true;
    return false;
}

bool ends_double_consonant(const std::string& w) {
    size_t n = w.size();
    return n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1);
}

// consonant-vowel-consonant ending where the final consonant is not w, x, y.
bool ends_cvc(const std::string& w) {
    size_t n = w.size();
    if (n < 3) return false;
    char last = w[n - 1];
    return is_consonant(w, n - 3) && !is_consonant(w, n - 2) && is_consonant(w, n - 1) &&
           last != 'w' && last != 'x' && last != 'y';
}

// Applies the first rule whose suffix matches. When that rule's condition
// fails the word is returned unchanged: later (shorter) suffixes are not
// tried, matching the published algorithm's longest-match semantics.
struct SuffixRule {
    const char* suffix;
    const char* replacement;
};

template <typename Cond>
std::string apply_rules(const std::string& w, std::initializer_list<SuffixRule> rules,
                        Cond cond) {
    for (const SuffixRule& r : rules) {
        std::string_view suf(r.suffix);
        if (w.size() >= suf.size() && w.ends_with(suf)) {
            std::string stem = w.substr(0, w.size() - suf.size());
            if (cond(stem)) return stem + r.replacement;
            return w;
        }
    }
    return w;
}

std::string step1a(const std::string& w) {
    return apply_rules(
        w, {{"sses", "ss"}, {"ies", "i"}, {"ss", "ss"}, {"s", ""}},
        [](const std::string&) { return true; });
}

std::string step1b(const std::string& w) {
    if (w.ends_with("eed")) {
        std::string stem = w.substr(0, w.size() - 3);
        return measure(stem) > 0 ? stem + "ee" : w;
    }
    std::string inter;
    if (w.ends_with("ed") && contains_vowel(w.substr(0, w.size() - 2)))
        inter = w.substr(0, w.size() - 2);
    else if (w.ends_with("ing") && contains_vowel(w.substr(0, w.size() - 3)))
        inter = w.substr(0, w.size() - 3);
    else
        return w;

    if (inter.ends_with("at") || inter.ends_with("bl") || inter.ends_with("iz"))
        return inter + "e";
    if (ends_double_consonant(inter)) {
        char last = inter.back();
        if (last != 'l' && last != 's' && last != 'z') return inter.substr(0, inter.size() - 1);
        return inter;
    }
    if (measure(inter) == 1 && ends_cvc(inter)) return inter + "e";
    return inter;
}

std::string step1c(const std::string& w) {
    if (w.ends_with("y")) {
        std::string stem = w.substr(0, w.size() - 1);
        if (contains_vowel(stem)) return stem + "i";
    }
    return w;
}

std::string step2(const std::string& w) {
    return apply_rules(w,
                       {{"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},
                        {"anci", "ance"},   {"izer", "ize"},    {"abli", "able"},
                        {"alli", "al"},     {"entli", "ent"},   {"eli", "e"},
                        {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
                        {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"},
                        {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"},
                        {"iviti", "ive"},   {"biliti", "ble"}},
                       [](const std::string& stem) { return measure(stem) > 0; });
}

std::string step3(const std::string& w) {
    return apply_rules(w,
                       {{"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
                        {"ical", "ic"},  {"ful", ""},   {"ness", ""}},
                       [](const std::string& stem) { return measure(stem) > 0; });
}

std::string step4(const std::string& w) {
    static const char* suffixes[] = {"al",  "ance", "ence", "er",  "ic",  "able", "ible",
                                     "ant", "ement", "ment", "ent", "ion", "ou",   "ism",
                                     "ate", "iti",  "ous",  "ive", "ize"};
    for (const char* s : suffixes) {
        std::string_view suf(s);
        if (w.size() >= suf.size() && w.ends_with(suf)) {
            std::string stem = w.substr(0, w.size() - suf.size());
            bool ok = measure(stem) > 1;
            if (suf == "ion") ok = ok && !stem.empty() && (stem.back() == 's' || stem.back() == 't');
            return ok ? stem : w;
        }
    }
    return w;
}

std::string step5a(const std::string& w) {
    if (w.ends_with("e")) {
        std::string stem = w.substr(0, w.size() - 1);
        if (measure(stem) > 1) return stem;
        if (measure(stem) == 1 && !ends_cvc(stem)) return stem;
    }
    return w;
}

std::string step5b(const std::string& w) {
    if (w.ends_with("ll") && measure(w.substr(0, w.size() - 1)) > 1)
        return w.substr(0, w.size() - 1);
    return w;
}

// ---- rank helpers -----------------------------------------------------------

std::vector<double> average_ranks(const std::vector<double>& xs) {
    size_t n = xs.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return xs[a] < xs[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    size_t n = a.size();
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va <= 0.0 || vb <= 0.0)
        throw std::runtime_error("spearman: a rank series has zero variance");
    return cov / std::sqrt(va * vb);
}

// ---- text-metric helpers ----------------------------------------------------

std::unordered_map<std::string, int> word_counts(const std::vector<std::string>& tokens) {
    std::unordered_map<std::string, int> counts;
    for (const std::string& w : tokens) ++counts[w];
    return counts;
}

// Greedy matcher used by the harmonic-mean metric: walks both token lists
// from the back, pairing each hypothesis token with the last unused equal
// token of the reference. Returns (hyp index, ref index) pairs.
struct MatchEntry {
    int idx;
    std::string word;
};

void match_stage(std::vector<MatchEntry>& hyp, std::vector<MatchEntry>& ref,
                 std::vector<std::pair<int, int>>& matches) {
    for (int i = static_cast<int>(hyp.size()) - 1; i >= 0; --i) {
        for (int j = static_cast<int>(ref.size()) - 1; j >= 0; --j) {
            if (hyp[static_cast<size_t>(i)].word == ref[static_cast<size_t>(j)].word) {
                matches.emplace_back(hyp[static_cast<size_t>(i)].idx,
                                     ref[static_cast<size_t>(j)].idx);
                hyp.erase(hyp.begin() + i);
                ref.erase(ref.begin() + j);
                break;
            }
        }
    }
}

double meteor_single(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
    constexpr double kAlpha = 0.9, kBeta = 3.0, kGamma = 0.5;
    if (hyp.empty() || ref.empty()) return 0.0;

    std::vector<MatchEntry> h, r;
    for (size_t i = 0; i < hyp.size(); ++i) h.push_back({static_cast<int>(i), hyp[i]});
    for (size_t j = 0; j < ref.size(); ++j) r.push_back({static_cast<int>(j), ref[j]});

    std::vector<std::pair<int, int>> matches;
    match_stage(h, r, matches);  // exact words
    for (auto& e : h) e.word = porter_stem(e.word);
    for (auto& e : r) e.word = porter_stem(e.word);
    match_stage(h, r, matches);  // stemmed words

    int m = static_cast<int>(matches.size());
    if (m == 0) return 0.0;
    double precision = static_cast<double>(m) / hyp.size();
    double recall = static_cast<double>(m) / ref.size();
    double fmean = precision * recall / (kAlpha * precision + (1.0 - kAlpha) * recall);

    std::sort(matches.begin(), matches.end());
    int chunks = 1;
    for (size_t i = 0; i + 1 < matches.size(); ++i)
        if (!(matches[i + 1].first == matches[i].first + 1 &&
              matches[i + 1].second == matches[i].second + 1))
            ++chunks;
    double frag = static_cast<double>(chunks) / m;
    return fmean * (1.0 - kGamma * std::pow(frag, kBeta));
}

// n-grams joined on an unprintable separator so keys stay plain strings.
std::unordered_map<std::string, double> ngram_counts(const std::vector<std::string>& tokens,
                                                     int n) {
    std::unordered_map<std::string, double> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (int k = 1; k < n; ++k) {
            key.push_back('\x1f');
            key += tokens[i + k];
        }
        counts[key] += 1.0;
    }
    return counts;
}

}  // namespace

double spearman(const ScorePairs& pairs) {
    if (pairs.size() < 2) throw std::runtime_error("spearman: needs at least two pairs");
    std::vector<double> preds, gts;
    for (const ScorePair& p : pairs) {
        preds.push_back(p.pred);
        gts.push_back(p.gt);
    }
    return pearson(average_ranks(preds), average_ranks(gts));
}

double rl2(const ScorePairs& pairs) {
    if (pairs.empty()) throw std::runtime_error("rl2: needs at least one pair");
    double sum = 0.0;
    for (const ScorePair& p : pairs) {
        if (!(p.s_max > p.s_min)) throw std::runtime_error("rl2: score range must be positive");
        double e = std::abs(p.gt - p.pred) / (p.s_max - p.s_min);
        sum += e * e;
    }
    return sum / static_cast<double>(pairs.size());
}

double bleu1(const std::string& candidate, const std::vector<std::string>& references) {
    std::vector<std::string> cand = tokenize_words(candidate);
    if (cand.empty()) throw std::runtime_error("bleu1: candidate has no tokens");
    if (references.empty()) throw std::runtime_error("bleu1: needs at least one reference");

    auto cand_counts = word_counts(cand);
    std::vector<std::unordered_map<std::string, int>> ref_counts;
    std::vector<int> ref_lens;
    for (const std::string& ref : references) {
        std::vector<std::string> toks = tokenize_words(ref);
        ref_lens.push_back(static_cast<int>(toks.size()));
        ref_counts.push_back(word_counts(toks));
    }

    int clipped = 0;
    for (const auto& [word, count] : cand_counts) {
        int best = 0;
        for (const auto& rc : ref_counts) {
            auto it = rc.find(word);
            if (it != rc.end()) best = std::max(best, it->second);
        }
        clipped += std::min(count, best);
    }
    double precision = static_cast<double>(clipped) / cand.size();

    int c = static_cast<int>(cand.size());
    int r = ref_lens[0];
    for (int len : ref_lens)
        if (std::abs(len - c) < std::abs(r - c) || (std::abs(len - c) == std::abs(r - c) && len < r))
            r = len;
    double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / c);
    return bp * precision;
}

std::string porter_stem(const std::string& word) {
    std::string w;
    w.reserve(word.size());
    for (char ch : word)
        w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    if (w.size() <= 2) return w;  // too short to carry a suffix
    w = step1a(w);
    w = step1b(w);
    w = step1c(w);
    w = step2(w);
    w = step3(w);
    w = step4(w);
    w = step5a(w);
    w = step5b(w);
    return w;
}

double meteor(const std::string& candidate, const std::vector<std::string>& references) {
    if (references.empty()) throw std::runtime_error("meteor: needs at least one reference");
    std::vector<std::string> cand = tokenize_words(candidate);
    double best = 0.0;
    for (const std::string& ref : references)
        best = std::max(best, meteor_single(cand, tokenize_words(ref)));
    return best;
}

double cider(const std::vector<std::string>& candidates,
             const std::vector<std::vector<std::string>>& references_corpus) {
    if (candidates.size() != references_corpus.size())
        throw std::runtime_error("cider: candidates and references must be parallel");
    if (candidates.empty()) throw std::runtime_error("cider: corpus is empty");
    constexpr int kMaxN = 4;
    size_t n_inst = candidates.size();

    // Document frequency per n-gram: in how many instances' reference sets
    // it appears at least once.
    std::vector<std::unordered_map<std::string, double>> df(kMaxN);
    for (const auto& refs : references_corpus) {
        if (refs.empty()) throw std::runtime_error("cider: an instance has no references");
        std::vector<std::unordered_set<std::string>> seen(kMaxN);
        for (const std::string& ref : refs) {
            std::vector<std::string> toks = tokenize_words(ref);
            for (int n = 1; n <= kMaxN; ++n)
                for (const auto& [key, cnt] : ngram_counts(toks, n))
                    seen[static_cast<size_t>(n - 1)].insert(key);
        }
        for (int n = 0; n < kMaxN; ++n)
            for (const std::string& key : seen[static_cast<size_t>(n)]) df[static_cast<size_t>(n)][key] += 1.0;
    }
    double log_n_inst = std::log(static_cast<double>(n_inst));

    auto tfidf = [&](const std::vector<std::string>& toks, int n) {
        std::unordered_map<std::string, double> vec = ngram_counts(toks, n);
        for (auto& [key, val] : vec) {
            auto it = df[static_cast<size_t>(n - 1)].find(key);
            double d = it == df[static_cast<size_t>(n - 1)].end() ? 0.0 : it->second;
            val *= log_n_inst - std::log(std::max(1.0, d));
        }
        return vec;
    };
    auto cosine = [](const std::unordered_map<std::string, double>& a,
                     const std::unordered_map<std::string, double>& b) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (const auto& [key, val] : a) {
            na += val * val;
            auto it = b.find(key);
            if (it != b.end()) dot += val * it->second;
        }
        for (const auto& [key, val] : b) nb += val * val;
        if (na == 0.0 || nb == 0.0) return 0.0;
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };

    double corpus_sum = 0.0;
    for (size_t i = 0; i < n_inst; ++i) {
        std::vector<std::string> cand = tokenize_words(candidates[i]);
        double inst_score = 0.0;
        for (int n = 1; n <= kMaxN; ++n) {
            auto cand_vec = tfidf(cand, n);
            double ref_sum = 0.0;
            for (const std::string& ref : references_corpus[i])
                ref_sum += cosine(cand_vec, tfidf(tokenize_words(ref), n));
            inst_score += ref_sum / references_corpus[i].size() / kMaxN;
        }
        corpus_sum += inst_score;
    }
    return corpus_sum / static_cast<double>(n_inst);
}

double embed_similarity(const std::string& candidate, const std::string& reference,
                        const TextEmbedder& embedder) {
    std::vector<std::string> ct = tokenize_words(candidate);
    std::vector<std::string> rt = tokenize_words(reference);
    if (ct.empty() || rt.empty()) return 0.0;

    auto embed_all = [&](const std::vector<std::string>& toks) {
        std::vector<std::vector<double>> out;
        for (const std::string& w : toks) out.push_back(embedder.embed(w));
        return out;
    };
    std::vector<std::vector<double>> ce = embed_all(ct), re = embed_all(rt);

    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        if (na == 0.0 || nb == 0.0) return 0.0;
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };

    double p = 0.0;
    for (const auto& cv : ce) {
        double best = -1.0;
        for (const auto& rv : re) best = std::max(best, cosine(cv, rv));
        p += best;
    }
    p /= ce.size();
    double r = 0.0;
    for (const auto& rv : re) {
        double best = -1.0;
        for (const auto& cv : ce) best = std::max(best, cosine(cv, rv));
        r += best;
    }
    r /= re.size();
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

void JudgeVerdict::validate() const {
    if (n_same_opinion < 0 || n_same_opinion > n_both_mentioned ||
        n_both_mentioned > n_gt_details)
        throw std::runtime_error("judge verdict violates 0 <= same <= both <= gt");
}

double gpt_m(const std::vector<JudgeVerdict>& verdicts) {
    double sum = 0.0;
    int n = 0;
    for (const JudgeVerdict& v : verdicts) {
        v.validate();
        if (v.n_gt_details == 0) continue;  // no details to recover; excluded
        sum += static_cast<double>(v.n_both_mentioned) / v.n_gt_details;
        ++n;
    }
    if (n == 0) throw std::runtime_error("gpt_m: no instances with ground-truth details");
    return sum / n;
}

double gpt_q(const std::vector<JudgeVerdict>& verdicts) {
    double sum = 0.0;
    int n = 0;
    for (const JudgeVerdict& v : verdicts) {
        v.validate();
        if (v.n_both_mentioned == 0) continue;  // opinion agreement undefined
        sum += static_cast<double>(v.n_same_opinion) / v.n_both_mentioned;
        ++n;
    }
    if (n == 0) throw std::runtime_error("gpt_q: no instances with both-mentioned details");
    return sum / n;
}

}  // namespace techcoach
