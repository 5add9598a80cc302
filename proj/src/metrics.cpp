#include "playtitle/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "playtitle/error.hpp"
#include "playtitle/hashing.hpp"
#include "playtitle/kernels.hpp"

namespace playtitle {

using nlohmann::json;

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

std::string ngram_key(const Tokens& tokens, std::size_t start, std::size_t n) {
    std::string key;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) key += '\x1f';
        key += tokens[start + i];
    }
    return key;
}

NgramCounts ngram_counts(const Tokens& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[ngram_key(tokens, i, n)];
    return counts;
}

std::size_t ngram_total(const Tokens& tokens, std::size_t n) { return tokens.size() >= n ? tokens.size() - n + 1 : 0; }

std::size_t clipped_matches(const NgramCounts& cand, const NgramCounts& ref) {
    std::size_t m = 0;
    for (const auto& [g, c] : cand) {
        auto it = ref.find(g);
        if (it != ref.end()) m += std::min(c, it->second);
    }
    return m;
}

void require_order(std::size_t n) {
    if (n < 1) throw InvalidArgument("n-gram order must be >= 1");
}

// Maximum number of adjacency links over all maximum-cardinality exact
// alignments; chunks = matches - links.
class ChunkMinimizer {
public:
    ChunkMinimizer(const Tokens& ref, const Tokens& cand) : ref_(ref), cand_(cand) {
        if (ref.size() > 64) throw InvalidArgument("METEOR supports references of at most 64 tokens");
        std::unordered_map<std::string, std::size_t> type_of;
        auto type = [&](const std::string& w) {
            auto [it, inserted] = type_of.emplace(w, type_of.size());
            return it->second;
        };
        for (const auto& w : ref) ref_type_.push_back(type(w));
        for (const auto& w : cand) cand_type_.push_back(type(w));
        const std::size_t types = type_of.size();
        ref_mask_.assign(types, 0);
        std::vector<std::size_t> ref_count(types, 0), cand_count(types, 0);
        for (std::size_t j = 0; j < ref.size(); ++j) {
            ref_mask_[ref_type_[j]] |= (std::uint64_t{1} << j);
            ++ref_count[ref_type_[j]];
        }
        for (auto t : cand_type_) ++cand_count[t];
        quota_.resize(types);
        for (std::size_t t = 0; t < types; ++t) {
            quota_[t] = std::min(ref_count[t], cand_count[t]);
            matches_ += quota_[t];
        }
        // suffix_[i][t]: occurrences of type t in cand[i..]
        suffix_.assign(cand.size() + 1, std::vector<std::size_t>(types, 0));
        for (std::size_t i = cand.size(); i-- > 0;) {
            suffix_[i] = suffix_[i + 1];
            ++suffix_[i][cand_type_[i]];
        }
    }

    std::size_t matches() const { return matches_; }

    std::size_t min_chunks() {
        if (matches_ == 0) return 0;
        return matches_ - static_cast<std::size_t>(best_links(0, 0, -1));
    }

private:
    struct Key {
        std::size_t i;
        std::uint64_t used;
        int prev;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            return std::hash<std::uint64_t>()(k.used * 0x9E3779B97F4A7C15ULL ^ (k.i << 8) ^
                                              static_cast<std::uint64_t>(k.prev + 1));
        }
    };

    int best_links(std::size_t i, std::uint64_t used, int prev) {
        if (i == cand_.size()) return 0;
        const Key key{i, used, prev};
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        const std::size_t t = cand_type_[i];
        const std::size_t matched = static_cast<std::size_t>(std::popcount(used & ref_mask_[t]));
        const std::size_t need = quota_[t] - matched;
        int best = std::numeric_limits<int>::min();
        if (suffix_[i][t] - 1 >= need) best = best_links(i + 1, used, -1);
        if (need > 0) {
            std::uint64_t free = ref_mask_[t] & ~used;
            while (free) {
                const int j = std::countr_zero(free);
                free &= free - 1;
                const int link = (prev >= 0 && j == prev + 1) ? 1 : 0;
                const int rest = best_links(i + 1, used | (std::uint64_t{1} << j), j);
                if (rest != std::numeric_limits<int>::min()) best = std::max(best, link + rest);
            }
        }
        memo_.emplace(key, best);
        return best;
    }

    const Tokens& ref_;
    const Tokens& cand_;
    std::vector<std::size_t> ref_type_, cand_type_, quota_;
    std::vector<std::uint64_t> ref_mask_;
    std::vector<std::vector<std::size_t>> suffix_;
    std::size_t matches_ = 0;
    std::unordered_map<Key, int, KeyHash> memo_;
};

double norm(std::span<const double> v) { return std::sqrt(kernels::dot(v.data(), v.data(), v.size())); }

void check_embeddings(const TokenEmbeddings& ref, const TokenEmbeddings& cand) {
    if (ref.rows == 0 || cand.rows == 0) throw InvalidArgument("embedding lists must be non-empty");
    if (ref.cols == 0 || ref.cols != cand.cols) throw InvalidArgument("embedding dimensions differ");
    for (const Matrix* m : {&ref, &cand}) {
        for (double v : m->data) {
            if (!std::isfinite(v)) throw InvalidArgument("non-finite embedding value");
        }
    }
}

std::vector<double> mean_row(const Matrix& m) {
    std::vector<double> mean(m.cols, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) kernels::axpy(1.0, m.row(r), mean.data(), m.cols);
    for (double& v : mean) v /= static_cast<double>(m.rows);
    return mean;
}

}  // namespace

double bleu_n(std::span<const EvalPair> pairs, std::size_t n, const BleuOptions& opts) {
    require_order(n);
    if (pairs.empty()) throw InvalidArgument("BLEU over an empty candidate corpus");
    std::vector<std::size_t> matches(n + 1, 0), totals(n + 1, 0);
    std::size_t cand_len = 0;
    std::size_t ref_len = 0;
    for (const auto& p : pairs) {
        cand_len += p.candidate.size();
        ref_len += p.reference.size();
        for (std::size_t k = 1; k <= n; ++k) {
            matches[k] += clipped_matches(ngram_counts(p.candidate, k), ngram_counts(p.reference, k));
            totals[k] += ngram_total(p.candidate, k);
        }
    }
    double log_sum = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        double pk = 0.0;
        if (opts.add_one_smoothing && k >= 2) {
            pk = (static_cast<double>(matches[k]) + 1.0) / (static_cast<double>(totals[k]) + 1.0);
        } else if (totals[k] > 0) {
            pk = static_cast<double>(matches[k]) / static_cast<double>(totals[k]);
        }
        if (pk == 0.0) return 0.0;
        log_sum += std::log(pk);
    }
    const double geo = std::exp(log_sum / static_cast<double>(n));
    double bp = 1.0;
    if (cand_len < ref_len) bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    return geo * bp;
}

PrfScore rouge_n_pair(const Tokens& reference, const Tokens& candidate, std::size_t n) {
    require_order(n);
    PrfScore s;
    const std::size_t tc = ngram_total(candidate, n);
    const std::size_t tr = ngram_total(reference, n);
    const auto m = static_cast<double>(clipped_matches(ngram_counts(candidate, n), ngram_counts(reference, n)));
    s.precision = tc ? m / static_cast<double>(tc) : 0.0;
    s.recall = tr ? m / static_cast<double>(tr) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

double rouge_n_f1(std::span<const EvalPair> pairs, std::size_t n) {
    require_order(n);
    if (pairs.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& p : pairs) sum += rouge_n_pair(p.reference, p.candidate, n).f1;
    return sum / static_cast<double>(pairs.size());
}

MeteorDetail meteor_pair(const Tokens& reference, const Tokens& candidate) {
    MeteorDetail d;
    ChunkMinimizer solver(reference, candidate);
    d.matches = solver.matches();
    if (d.matches == 0) return d;
    d.chunks = solver.min_chunks();
    const double m = static_cast<double>(d.matches);
    const double p = m / static_cast<double>(candidate.size());
    const double r = m / static_cast<double>(reference.size());
    const double f = 10.0 * p * r / (r + 9.0 * p);
    const double frag = static_cast<double>(d.chunks) / m;
    const double penalty = 0.5 * frag * frag * frag;
    d.score = f * (1.0 - penalty);
    return d;
}

double meteor(std::span<const EvalPair> pairs) {
    if (pairs.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& p : pairs) sum += meteor_pair(p.reference, p.candidate).score;
    return sum / static_cast<double>(pairs.size());
}

double distinct_n(std::span<const Tokens> candidates, std::size_t n) {
    require_order(n);
    std::unordered_set<std::string> distinct;
    std::size_t total = 0;
    for (const auto& c : candidates) {
        for (std::size_t i = 0; i + n <= c.size(); ++i) {
            distinct.insert(ngram_key(c, i, n));
            ++total;
        }
    }
    if (total == 0) throw InvalidArgument("distinct-" + std::to_string(n) + ": no n-grams in candidates");
    return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) throw InvalidArgument("cosine of vectors with different dimensions");
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw InvalidArgument("cosine of a zero-norm vector");
    return kernels::dot(a.data(), b.data(), a.size()) / (na * nb);
}

PrfScore bert_score(const TokenEmbeddings& ref, const TokenEmbeddings& cand) {
    check_embeddings(ref, cand);
    Matrix sim(ref.rows, cand.rows);
    for (std::size_t i = 0; i < ref.rows; ++i) {
        for (std::size_t j = 0; j < cand.rows; ++j) sim(i, j) = cosine(ref.row_span(i), cand.row_span(j));
    }
    PrfScore s;
    for (std::size_t i = 0; i < ref.rows; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < cand.rows; ++j) best = std::max(best, sim(i, j));
        s.recall += best;
    }
    s.recall /= static_cast<double>(ref.rows);
    for (std::size_t j = 0; j < cand.rows; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < ref.rows; ++i) best = std::max(best, sim(i, j));
        s.precision += best;
    }
    s.precision /= static_cast<double>(cand.rows);
    const double denom = s.precision + s.recall;
    s.f1 = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
    return s;
}

double bert_score_f1(const TokenEmbeddings& ref, const TokenEmbeddings& cand) { return bert_score(ref, cand).f1; }

double sentence_cosine(const TokenEmbeddings& ref, const TokenEmbeddings& cand) {
    check_embeddings(ref, cand);
    const auto a = mean_row(ref);
    const auto b = mean_row(cand);
    return cosine(a, b);
}

std::vector<EvalPair> read_pairs_jsonl(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::vector<EvalPair> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + " line " + std::to_string(line_no);
        try {
            const json j = json::parse(line);
            for (const char* f : {"pid", "reference", "candidate"}) {
                if (!j.contains(f)) throw MissingField(f, where);
            }
            EvalPair p;
            p.pid = j.at("pid").get<std::string>();
            p.reference = j.at("reference").get<Tokens>();
            p.candidate = j.at("candidate").get<Tokens>();
            if (p.reference.empty()) throw ParseError(where + ": empty reference");
            pairs.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
    }
    return pairs;
}

void write_pairs_jsonl(const std::filesystem::path& path, std::span<const EvalPair> pairs) {
    std::string out;
    for (const auto& p : pairs) {
        out += json{{"pid", p.pid}, {"reference", p.reference}, {"candidate", p.candidate}}.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::map<std::string, PairEmbeddings> read_embeddings(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::map<std::string, PairEmbeddings> out;
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + msg);
    };
    auto read_block = [&](std::size_t dim, Matrix& m) {
        m = Matrix(0, dim);
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) break;
            std::istringstream row(line);
            std::vector<double> values;
            std::string tok;
            while (row >> tok) {
                try {
                    std::size_t used = 0;
                    values.push_back(std::stod(tok, &used));
                    if (used != tok.size()) fail("bad number \"" + tok + "\"");
                } catch (const std::logic_error&) {
                    fail("bad number \"" + tok + "\"");
                }
            }
            if (values.size() != dim) fail("expected " + std::to_string(dim) + " values");
            m.data.insert(m.data.end(), values.begin(), values.end());
            ++m.rows;
        }
        if (m.rows == 0) fail("empty embedding block");
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream header(line);
        std::string pid;
        long long dim = 0;
        if (!(header >> pid >> dim) || dim <= 0) fail("expected header \"<pid> <dim>\"");
        PairEmbeddings e;
        read_block(static_cast<std::size_t>(dim), e.reference);
        read_block(static_cast<std::size_t>(dim), e.candidate);
        if (!out.emplace(pid, std::move(e)).second) fail("duplicate pid " + pid);
    }
    return out;
}

std::string format_embeddings(const std::map<std::string, PairEmbeddings>& embeddings) {
    std::ostringstream out;
    out.precision(17);
    for (const auto& [pid, e] : embeddings) {
        out << pid << ' ' << e.reference.cols << '\n';
        for (const Matrix* m : {&e.reference, &e.candidate}) {
            for (std::size_t r = 0; r < m->rows; ++r) {
                for (std::size_t c = 0; c < m->cols; ++c) out << (c ? " " : "") << (*m)(r, c);
                out << '\n';
            }
            out << '\n';
        }
    }
    return out.str();
}

namespace {

std::optional<double> maybe_distinct(std::span<const Tokens> candidates, std::size_t n) {
    try {
        return distinct_n(candidates, n);
    } catch (const InvalidArgument&) {
        return std::nullopt;
    }
}

MetricValues aggregate(std::span<const EvalPair> pairs, std::span<const PairMetrics> per_pair) {
    MetricValues v;
    v.pairs = pairs.size();
    if (pairs.empty()) return v;
    v.bleu1 = bleu_n(pairs, 1);
    v.bleu2 = bleu_n(pairs, 2);
    v.rouge1 = rouge_n_f1(pairs, 1);
    v.rouge2 = rouge_n_f1(pairs, 2);
    v.meteor = meteor(pairs);
    std::vector<Tokens> cands;
    for (const auto& p : pairs) cands.push_back(p.candidate);
    v.distinct1 = maybe_distinct(cands, 1);
    v.distinct2 = maybe_distinct(cands, 2);
    v.distinct3 = maybe_distinct(cands, 3);
    auto mean_of = [&](auto field) -> std::optional<double> {
        double sum = 0.0;
        for (const auto& m : per_pair) {
            if (!(m.*field)) return std::nullopt;
            sum += *(m.*field);
        }
        return sum / static_cast<double>(per_pair.size());
    };
    v.bert_score = mean_of(&PairMetrics::bert_score);
    v.sentence_bert = mean_of(&PairMetrics::sentence_bert);
    v.nll = mean_of(&PairMetrics::nll);
    return v;
}

std::string missing_list(const std::vector<std::string>& pids) {
    std::string s;
    for (std::size_t i = 0; i < pids.size(); ++i) s += (i ? "," : "") + pids[i];
    return s;
}

std::array<MetricValues, 4> bucket_values(std::span<const EvalPair> pairs, std::span<const PairMetrics> per_pair,
                                          std::optional<Quartile> PairMetrics::*field) {
    std::array<MetricValues, 4> out;
    for (int q = 0; q < 4; ++q) {
        std::vector<EvalPair> sub;
        std::vector<PairMetrics> sub_metrics;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (per_pair[i].*field == static_cast<Quartile>(q)) {
                sub.push_back(pairs[i]);
                sub_metrics.push_back(per_pair[i]);
            }
        }
        out[static_cast<std::size_t>(q)] = aggregate(sub, sub_metrics);
    }
    return out;
}

}  // namespace

EvalReport evaluate(const EvalInputs& in) {
    if (in.pairs.empty()) throw InvalidArgument("evaluate needs at least one pair");
    std::vector<std::string> missing_stats, missing_emb;
    EvalReport report;
    for (const auto& p : in.pairs) {
        PairMetrics m;
        m.pid = p.pid;
        const EvalPair single[] = {p};
        m.bleu1 = bleu_n(single, 1);
        m.rouge1 = rouge_n_pair(p.reference, p.candidate, 1).f1;
        m.rouge2 = rouge_n_pair(p.reference, p.candidate, 2).f1;
        m.meteor = meteor_pair(p.reference, p.candidate).score;
        if (in.embeddings) {
            auto it = in.embeddings->find(p.pid);
            if (it == in.embeddings->end()) {
                missing_emb.push_back(p.pid);
            } else {
                m.bert_score = bert_score_f1(it->second.reference, it->second.candidate);
                m.sentence_bert = sentence_cosine(it->second.reference, it->second.candidate);
            }
        }
        if (in.nll) {
            auto it = in.nll->find(p.pid);
            if (it != in.nll->end()) m.nll = it->second;
        }
        if (in.stats) {
            auto it = in.stats->find(p.pid);
            if (it == in.stats->end()) {
                missing_stats.push_back(p.pid);
            } else {
                m.stats = it->second;
            }
        }
        report.per_pair.push_back(std::move(m));
    }
    if (!missing_stats.empty()) throw InvalidArgument("missing frequency stats for pids: " + missing_list(missing_stats));
    if (!missing_emb.empty()) throw InvalidArgument("missing embeddings for pids: " + missing_list(missing_emb));

    report.corpus = aggregate(in.pairs, report.per_pair);
    if (in.stats) {
        std::vector<std::pair<std::string, double>> ft, fa;
        for (const auto& m : report.per_pair) {
            ft.emplace_back(m.pid, m.stats->f_t);
            fa.emplace_back(m.pid, m.stats->f_a);
        }
        const auto bt = quartile_buckets(ft);
        const auto ba = quartile_buckets(fa);
        for (auto& m : report.per_pair) {
            m.bucket_ft = bt.at(m.pid);
            m.bucket_fa = ba.at(m.pid);
        }
        report.by_bucket_ft = bucket_values(in.pairs, report.per_pair, &PairMetrics::bucket_ft);
        report.by_bucket_fa = bucket_values(in.pairs, report.per_pair, &PairMetrics::bucket_fa);
    }
    return report;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

json values_to_json(const MetricValues& v) {
    return {{"pairs", v.pairs},         {"bleu1", v.bleu1},         {"bleu2", v.bleu2},
            {"rouge1", v.rouge1},       {"rouge2", v.rouge2},       {"meteor", v.meteor},
            {"distinct1", opt(v.distinct1)}, {"distinct2", opt(v.distinct2)}, {"distinct3", opt(v.distinct3)},
            {"bert_score", opt(v.bert_score)}, {"sentence_bert", opt(v.sentence_bert)}, {"nll", opt(v.nll)}};
}

MetricValues values_from_json(const json& j) {
    MetricValues v;
    v.pairs = j.at("pairs").get<std::size_t>();
    v.bleu1 = j.at("bleu1").get<double>();
    v.bleu2 = j.at("bleu2").get<double>();
    v.rouge1 = j.at("rouge1").get<double>();
    v.rouge2 = j.at("rouge2").get<double>();
    v.meteor = j.at("meteor").get<double>();
    v.distinct1 = opt_from(j, "distinct1");
    v.distinct2 = opt_from(j, "distinct2");
    v.distinct3 = opt_from(j, "distinct3");
    v.bert_score = opt_from(j, "bert_score");
    v.sentence_bert = opt_from(j, "sentence_bert");
    v.nll = opt_from(j, "nll");
    return v;
}

json buckets_to_json(const std::array<MetricValues, 4>& b) {
    json j = json::object();
    for (int q = 0; q < 4; ++q) j[quartile_name(static_cast<Quartile>(q))] = values_to_json(b[static_cast<std::size_t>(q)]);
    return j;
}

std::array<MetricValues, 4> buckets_from_json(const json& j) {
    std::array<MetricValues, 4> b;
    for (int q = 0; q < 4; ++q) b[static_cast<std::size_t>(q)] = values_from_json(j.at(quartile_name(static_cast<Quartile>(q))));
    return b;
}

std::optional<Quartile> quartile_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    const std::string s = j.at(key).get<std::string>();
    for (int q = 0; q < 4; ++q) {
        if (s == quartile_name(static_cast<Quartile>(q))) return static_cast<Quartile>(q);
    }
    throw ParseError("bad quartile label " + s);
}

std::string csv_number(const std::optional<double>& v) {
    if (!v) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

}  // namespace

json report_to_json(const EvalReport& r) {
    json pairs = json::array();
    for (const auto& m : r.per_pair) {
        json p = {{"pid", m.pid},       {"bleu1", m.bleu1},   {"rouge1", m.rouge1},
                  {"rouge2", m.rouge2}, {"meteor", m.meteor}, {"bert_score", opt(m.bert_score)},
                  {"sentence_bert", opt(m.sentence_bert)},    {"nll", opt(m.nll)}};
        p["f_t"] = m.stats ? json(m.stats->f_t) : json(nullptr);
        p["f_a"] = m.stats ? json(m.stats->f_a) : json(nullptr);
        p["bucket_ft"] = m.bucket_ft ? json(quartile_name(*m.bucket_ft)) : json(nullptr);
        p["bucket_fa"] = m.bucket_fa ? json(quartile_name(*m.bucket_fa)) : json(nullptr);
        pairs.push_back(std::move(p));
    }
    json j = {{"corpus", values_to_json(r.corpus)}, {"pairs", pairs}};
    j["by_bucket_ft"] = r.by_bucket_ft ? buckets_to_json(*r.by_bucket_ft) : json(nullptr);
    j["by_bucket_fa"] = r.by_bucket_fa ? buckets_to_json(*r.by_bucket_fa) : json(nullptr);
    return j;
}

EvalReport report_from_json(const json& j) {
    try {
        EvalReport r;
        r.corpus = values_from_json(j.at("corpus"));
        for (const auto& p : j.at("pairs")) {
            PairMetrics m;
            m.pid = p.at("pid").get<std::string>();
            m.bleu1 = p.at("bleu1").get<double>();
            m.rouge1 = p.at("rouge1").get<double>();
            m.rouge2 = p.at("rouge2").get<double>();
            m.meteor = p.at("meteor").get<double>();
            m.bert_score = opt_from(p, "bert_score");
            m.sentence_bert = opt_from(p, "sentence_bert");
            m.nll = opt_from(p, "nll");
            const auto ft = opt_from(p, "f_t");
            const auto fa = opt_from(p, "f_a");
            if (ft && fa) m.stats = FrequencyStats{*ft, *fa};
            m.bucket_ft = quartile_from(p, "bucket_ft");
            m.bucket_fa = quartile_from(p, "bucket_fa");
            r.per_pair.push_back(std::move(m));
        }
        if (!j.at("by_bucket_ft").is_null()) r.by_bucket_ft = buckets_from_json(j.at("by_bucket_ft"));
        if (!j.at("by_bucket_fa").is_null()) r.by_bucket_fa = buckets_from_json(j.at("by_bucket_fa"));
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed report: ") + e.what());
    }
}

std::string report_to_csv(const EvalReport& r) {
    std::string out = "pid,f_t,f_a,bucket_ft,bucket_fa,bleu1,rouge1,rouge2,meteor,bert_score,sentence_bert,nll\n";
    for (const auto& m : r.per_pair) {
        out += m.pid + ",";
        out += csv_number(m.stats ? std::optional(m.stats->f_t) : std::nullopt) + ",";
        out += csv_number(m.stats ? std::optional(m.stats->f_a) : std::nullopt) + ",";
        out += std::string(m.bucket_ft ? quartile_name(*m.bucket_ft) : "") + ",";
        out += std::string(m.bucket_fa ? quartile_name(*m.bucket_fa) : "") + ",";
        out += csv_number(m.bleu1) + "," + csv_number(m.rouge1) + "," + csv_number(m.rouge2) + "," +
               csv_number(m.meteor) + "," + csv_number(m.bert_score) + "," + csv_number(m.sentence_bert) + "," +
               csv_number(m.nll) + "\n";
    }
    return out;
}

}  // namespace playtitle
