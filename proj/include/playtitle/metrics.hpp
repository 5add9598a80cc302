#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "playtitle/splitter.hpp"
#include "playtitle/tensor.hpp"

namespace playtitle {

using Tokens = std::vector<std::string>;

struct EvalPair {
    std::string pid;
    Tokens reference;
    Tokens candidate;
};

std::vector<EvalPair> read_pairs_jsonl(const std::filesystem::path& path);
void write_pairs_jsonl(const std::filesystem::path& path, std::span<const EvalPair> pairs);

struct BleuOptions {
    bool add_one_smoothing = false;  // orders >= 2 only
};

// Corpus-level BLEU with clipped n-gram precision over orders 1..n and the
// brevity penalty.
double bleu_n(std::span<const EvalPair> pairs, std::size_t n, const BleuOptions& opts = {});

struct PrfScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

PrfScore rouge_n_pair(const Tokens& reference, const Tokens& candidate, std::size_t n);
// Macro average of per-pair ROUGE-N F1.
double rouge_n_f1(std::span<const EvalPair> pairs, std::size_t n);

struct MeteorDetail {
    std::size_t matches = 0;
    std::size_t chunks = 0;
    double score = 0.0;
};

// Exact-match unigram METEOR with the chunk count minimized over all
// maximum-cardinality alignments.
MeteorDetail meteor_pair(const Tokens& reference, const Tokens& candidate);
double meteor(std::span<const EvalPair> pairs);

// Distinct n-grams over all n-grams pooled across candidates.
double distinct_n(std::span<const Tokens> candidates, std::size_t n);

// Rows are token vectors.
using TokenEmbeddings = Matrix;

double cosine(std::span<const double> a, std::span<const double> b);
PrfScore bert_score(const TokenEmbeddings& ref, const TokenEmbeddings& cand);
double bert_score_f1(const TokenEmbeddings& ref, const TokenEmbeddings& cand);
double sentence_cosine(const TokenEmbeddings& ref, const TokenEmbeddings& cand);

struct PairEmbeddings {
    TokenEmbeddings reference;
    TokenEmbeddings candidate;
};

// Per pid: header "<pid> <dim>", reference rows, a blank line, candidate
// rows, a blank line.
std::map<std::string, PairEmbeddings> read_embeddings(const std::filesystem::path& path);
std::string format_embeddings(const std::map<std::string, PairEmbeddings>& embeddings);

struct MetricValues {
    std::size_t pairs = 0;
    double bleu1 = 0, bleu2 = 0;
    double rouge1 = 0, rouge2 = 0;
    double meteor = 0;
    // Empty when the candidates contain no n-grams of that order.
    std::optional<double> distinct1, distinct2, distinct3;
    std::optional<double> bert_score;
    std::optional<double> sentence_bert;
    std::optional<double> nll;
};

struct PairMetrics {
    std::string pid;
    double bleu1 = 0;  // sentence-level, no smoothing
    double rouge1 = 0, rouge2 = 0;
    double meteor = 0;
    std::optional<double> bert_score;
    std::optional<double> sentence_bert;
    std::optional<double> nll;
    std::optional<FrequencyStats> stats;
    std::optional<Quartile> bucket_ft;
    std::optional<Quartile> bucket_fa;
};

struct EvalReport {
    MetricValues corpus;
    std::vector<PairMetrics> per_pair;
    // Present only when frequency statistics were supplied.
    std::optional<std::array<MetricValues, 4>> by_bucket_ft;
    std::optional<std::array<MetricValues, 4>> by_bucket_fa;
};

struct EvalInputs {
    std::span<const EvalPair> pairs;
    const std::map<std::string, FrequencyStats>* stats = nullptr;
    const std::map<std::string, PairEmbeddings>* embeddings = nullptr;
    const std::map<std::string, double>* nll = nullptr;
};

EvalReport evaluate(const EvalInputs& inputs);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
std::string report_to_csv(const EvalReport& report);

}  // namespace playtitle
