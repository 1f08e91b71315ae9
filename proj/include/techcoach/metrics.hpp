#pragma once

#include <string>
#include <vector>

#include "techcoach/text.hpp"

namespace techcoach {

// One scored instance: predicted and ground-truth score plus the instance's
// valid score range, used to normalize the regression error.
struct ScorePair {
    double pred = 0.0;
    double gt = 0.0;
    double s_min = 0.0;
    double s_max = 10.0;
};
using ScorePairs = std::vector<ScorePair>;

// Spearman rank correlation: Pearson correlation of the two series after
// average-rank transformation (ties share their average rank). Needs at
// least two pairs; throws when either rank series has zero variance.
double spearman(const ScorePairs& pairs);

// Mean squared range-normalized error: (1/N) * sum((|gt - pred| / range)^2).
double rl2(const ScorePairs& pairs);

// Unigram BLEU: clipped unigram precision times the brevity penalty, with
// the reference length chosen closest to the candidate length (ties favor
// the shorter reference). Texts are normalized by tokenize_words.
double bleu1(const std::string& candidate, const std::vector<std::string>& references);

// Classic Porter stemming algorithm (the original published rule set).
std::string porter_stem(const std::string& word);

// Harmonic-mean alignment metric with exact and stemmed matching stages (no
// synonym resource). Standard constants: alpha=0.9, beta=3, gamma=0.5;
// multi-reference scores take the best reference.
double meteor(const std::string& candidate, const std::vector<std::string>& references);

// Consensus captioning metric: mean over n in 1..4 of the TF-IDF-weighted
// n-gram cosine between candidate and references, averaged over references
// and then over instances. IDF comes from the reference corpus; throws on an
// empty corpus.
double cider(const std::vector<std::string>& candidates,
             const std::vector<std::vector<std::string>>& references_corpus);

// Greedy token-level cosine matching F1 under the given embedder.
double embed_similarity(const std::string& candidate, const std::string& reference,
                        const TextEmbedder& embedder);

// Structured outcome of one LLM-judge comparison of generated vs ground-truth
// commentary: how many technical details the ground truth carries, how many
// both texts mention, and how many of those share the same opinion.
struct JudgeVerdict {
    int n_gt_details = 0;
    int n_both_mentioned = 0;
    int n_same_opinion = 0;
    std::string raw;  // the judge's verbatim reply, kept for audits

    void validate() const;  // enforces 0 <= same <= both <= gt
};

// Mean over instances of n_both/n_gt; instances with zero ground-truth
// details are excluded (throws if none remain).
double gpt_m(const std::vector<JudgeVerdict>& verdicts);

// Mean over instances of n_same/n_both; instances with zero both-mentioned
// details are excluded (throws if none remain).
double gpt_q(const std::vector<JudgeVerdict>& verdicts);

}  // namespace techcoach
