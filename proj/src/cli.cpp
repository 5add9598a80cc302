#include "playtitle/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "playtitle/checkpoint.hpp"
#include "playtitle/corpus.hpp"
#include "playtitle/error.hpp"
#include "playtitle/generator.hpp"
#include "playtitle/hashing.hpp"
#include "playtitle/metrics.hpp"
#include "playtitle/report.hpp"
#include "playtitle/splitter.hpp"
#include "playtitle/synth.hpp"
#include "playtitle/trainer.hpp"
#include "playtitle/unicode.hpp"
#include "playtitle/vocab.hpp"

namespace playtitle::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<std::int64_t> pinned_epoch() {
    const char* env = std::getenv("SOURCE_DATE_EPOCH");
    if (!env || !*env) return std::nullopt;
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (*end != '\0') throw InvalidArgument("SOURCE_DATE_EPOCH is not an integer");
    return v;
}

std::string timestamp() {
    std::time_t t = 0;
    if (auto pinned = pinned_epoch()) {
        t = static_cast<std::time_t>(*pinned);
    } else {
        t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void log_line(bool quiet, const std::string& line) {
    if (!quiet) std::cerr << line << '\n';
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

// Collects everything needed to re-run a command and writes it next to the
// command's outputs once they exist.
class RunRecorder {
public:
    RunRecorder(std::string command, std::span<const std::string> argv, std::uint64_t seed)
        : command_(std::move(command)), argv_(argv.begin(), argv.end()), seed_(seed), started_(timestamp()) {}

    json config = json::object();

    void input(const fs::path& p) { inputs_.push_back(p); }
    void output(const fs::path& p) { outputs_.push_back(p); }

    void finish(const fs::path& out_dir) {
        json inputs = json::array();
        for (const auto& p : inputs_) inputs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
        json outputs = json::array();
        for (const auto& p : outputs_) outputs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
        json m = {{"command", command_}, {"argv", argv_},     {"seed", seed_},       {"config", config},
                  {"inputs", inputs},    {"outputs", outputs}, {"started_at", started_}, {"finished_at", timestamp()}};
        write_file_atomic(out_dir / (command_ + ".manifest.json"), pretty(m));
    }

private:
    std::string command_;
    std::vector<std::string> argv_;
    std::uint64_t seed_;
    std::string started_;
    std::vector<fs::path> inputs_;
    std::vector<fs::path> outputs_;
};

struct Common {
    std::uint64_t seed = 0;
    std::string out_dir;
    bool quiet = false;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    sub->add_option("--out-dir", c.out_dir, "Output directory")->required();
    sub->add_flag("--quiet", c.quiet, "Suppress progress output");
    sub->fallthrough();
}

std::vector<Playlist> load_playlists(const fs::path& path) {
    try {
        return parse_normalized_jsonl(read_file(path));
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::usage) throw Error(e.code(), path.string() + ": " + e.what(), e.kind());
        throw;
    }
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
    Common common;
    SynthConfig cfg;
    std::string start = "2017-01-01";
    std::string end = "2020-12-31";
};

void run_synth(SynthArgs& a, std::span<const std::string> argv) {
    a.cfg.start = Date::parse(a.start);
    a.cfg.end = Date::parse(a.end);
    a.cfg.seed = a.common.seed;
    RunRecorder rec("synth", argv, a.common.seed);
    const auto corpus = synthesize(a.cfg);
    const fs::path dir = a.common.out_dir;
    write_normalized_jsonl(dir / "corpus.jsonl", corpus.playlists);
    std::string tags = "# genre tags\n";
    for (const auto& t : corpus.tags) tags += t + "\n";
    write_file_atomic(dir / "tags.txt", tags);
    rec.output(dir / "corpus.jsonl");
    rec.output(dir / "tags.txt");
    const auto& c = a.cfg;
    rec.config = {{"zipf_exponent", c.zipf_exponent},
                  {"n_playlists", c.n_playlists},
                  {"n_tracks", c.n_tracks},
                  {"n_artists", c.n_artists},
                  {"artists_per_track", c.artists_per_track},
                  {"n_genres", c.n_genres},
                  {"start_date", c.start.to_string()},
                  {"end_date", c.end.to_string()},
                  {"min_tracks", c.min_tracks},
                  {"max_tracks", c.max_tracks},
                  {"recent_fraction", c.recent_fraction},
                  {"recent_window_days", c.recent_window_days},
                  {"noise_fraction", c.noise_fraction}};
    rec.finish(dir);
    log_line(a.common.quiet, "synth: " + std::to_string(corpus.playlists.size()) + " playlists");
}

// ---- convert ---------------------------------------------------------------

struct ConvertArgs {
    Common common;
    std::string input;
    std::string format = "normalized-jsonl";
    std::string song_meta;
    std::string mapping;
};

void run_convert(ConvertArgs& a, std::span<const std::string> argv) {
    RunRecorder rec("convert", argv, a.common.seed);
    IngestOptions opts;
    rec.input(a.input);
    if (!a.mapping.empty()) {
        opts.mapping = AdapterMapping::load(a.mapping);
        rec.input(a.mapping);
    }
    if (!a.song_meta.empty()) {
        opts.song_meta = a.song_meta;
        rec.input(a.song_meta);
    }
    const auto playlists = ingest(a.input, parse_input_format(a.format), opts);
    const fs::path out = fs::path(a.common.out_dir) / "corpus.jsonl";
    write_normalized_jsonl(out, playlists);
    rec.output(out);
    rec.config = {{"format", a.format}, {"song_meta", a.song_meta}, {"mapping", a.mapping}};
    rec.finish(a.common.out_dir);
    log_line(a.common.quiet, "convert: " + std::to_string(playlists.size()) + " playlists");
}

// ---- filter ----------------------------------------------------------------

struct FilterArgs {
    Common common;
    std::string input;
    std::string tags;
    std::string language;
    FilterConfig cfg;
    std::string tag_match = "token";
};

void run_filter(FilterArgs& a, std::span<const std::string> argv) {
    a.cfg.tag_match_mode = parse_tag_match_mode(a.tag_match);
    a.cfg.validate();
    RunRecorder rec("filter", argv, a.common.seed);
    rec.input(a.input);
    rec.input(a.tags);
    const auto playlists = load_playlists(a.input);
    const auto tags = TagList::load(a.tags, a.language);
    const auto result = filter_corpus(playlists, a.cfg, tags);
    const fs::path dir = a.common.out_dir;
    write_normalized_jsonl(dir / "filtered.jsonl", result.kept);
    const auto& r = result.stats.rejected;
    json stats = {{"input", playlists.size()},
                  {"kept", result.stats.kept},
                  {"rejected",
                   {{"title_tokens", r[0]}, {"avg_char_len", r[1]}, {"track_count", r[2]}, {"tag_match", r[3]}}}};
    write_file_atomic(dir / "filter_stats.json", pretty(stats));
    rec.output(dir / "filtered.jsonl");
    rec.output(dir / "filter_stats.json");
    rec.config = {{"min_title_tokens", a.cfg.min_title_tokens},
                  {"min_avg_char_len", a.cfg.min_avg_char_len},
                  {"min_tracks", a.cfg.min_tracks},
                  {"tag_match", a.tag_match},
                  {"language", a.language}};
    rec.finish(dir);
    log_line(a.common.quiet, "filter: kept " + std::to_string(result.stats.kept) + " of " +
                                 std::to_string(playlists.size()));
}

// ---- split -----------------------------------------------------------------

struct SplitArgs {
    Common common;
    std::string input;
    std::string cutoff;
    double val_fraction = 0.5;
};

void run_split(SplitArgs& a, std::span<const std::string> argv) {
    SplitConfig cfg;
    cfg.cutoff_date = Date::parse(a.cutoff);
    cfg.val_fraction_of_holdout = a.val_fraction;
    cfg.seed = a.common.seed;
    RunRecorder rec("split", argv, a.common.seed);
    rec.input(a.input);
    const auto playlists = load_playlists(a.input);
    const auto split = chronological_split(playlists, cfg);
    const fs::path dir = a.common.out_dir;
    write_normalized_jsonl(dir / "train.jsonl", split.train);
    write_normalized_jsonl(dir / "val.jsonl", split.val);
    write_normalized_jsonl(dir / "test.jsonl", split.test);
    write_split_manifest(dir / "split_manifest.json", make_split_manifest(split, cfg));
    const auto freq = build_frequency_table(split.train);
    write_counts_tsv(dir / "track_counts.tsv", freq.track_counts);
    write_counts_tsv(dir / "artist_counts.tsv", freq.artist_counts);
    for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl", "split_manifest.json", "track_counts.tsv",
                          "artist_counts.tsv"}) {
        rec.output(dir / f);
    }
    rec.config = {{"cutoff", cfg.cutoff_date.to_string()},
                  {"val_fraction", a.val_fraction},
                  {"train_percent", split.train_percent},
                  {"holdout_percent", split.holdout_percent}};
    rec.finish(dir);
    char buf[160];
    std::snprintf(buf, sizeof buf, "split: train %zu (%.2f%%), val %zu, test %zu", split.train.size(),
                  split.train_percent, split.val.size(), split.test.size());
    log_line(a.common.quiet, buf);
}

// ---- build-vocab -----------------------------------------------------------

struct VocabArgs {
    Common common;
    std::string train;
    std::string input_mode = "track";
    std::size_t min_count = 1;
    std::size_t output_min_count = 1;
};

void run_build_vocab(VocabArgs& a, std::span<const std::string> argv) {
    const InputMode mode = parse_input_mode(a.input_mode);
    RunRecorder rec("build-vocab", argv, a.common.seed);
    rec.input(a.train);
    const auto train = load_playlists(a.train);
    const auto in_vocab = build_input_vocab(train, mode, a.min_count);
    const auto out_vocab = build_output_vocab(train, a.output_min_count);
    const fs::path dir = a.common.out_dir;
    in_vocab.save(dir / "input_vocab.txt");
    out_vocab.save(dir / "output_vocab.txt");
    write_file_atomic(dir / "vocab_meta.json", pretty({{"input_mode", input_mode_name(mode)}}));
    for (const char* f : {"input_vocab.txt", "output_vocab.txt", "vocab_meta.json"}) rec.output(dir / f);
    rec.config = {{"input_mode", input_mode_name(mode)},
                  {"min_count", a.min_count},
                  {"output_min_count", a.output_min_count}};
    rec.finish(dir);
    log_line(a.common.quiet, "build-vocab: input " + std::to_string(in_vocab.size()) + ", output " +
                                 std::to_string(out_vocab.size()));
}

struct VocabPair {
    Vocab input;
    Vocab output;
    InputMode mode = InputMode::track;
};

VocabPair load_vocab_dir(const fs::path& dir, RunRecorder& rec) {
    VocabPair v;
    for (const char* f : {"input_vocab.txt", "output_vocab.txt", "vocab_meta.json"}) rec.input(dir / f);
    v.input = Vocab::load(dir / "input_vocab.txt");
    v.output = Vocab::load(dir / "output_vocab.txt");
    try {
        v.mode = parse_input_mode(json::parse(read_file(dir / "vocab_meta.json")).at("input_mode").get<std::string>());
    } catch (const json::exception& e) {
        throw ParseError((dir / "vocab_meta.json").string() + ": " + e.what());
    }
    return v;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
    Common common;
    std::string train;
    std::string val;
    std::string vocab_dir;
    std::string input_mode;
    ModelConfig model;
    TrainConfig cfg;
    std::string decay_mode = "decoupled";
    std::string schedule_unit = "epoch";
    std::size_t max_input_len = 128;
};

json train_config_json(const TrainConfig& c, const std::string& decay_mode, const std::string& unit) {
    return {{"lr_max", c.lr_max},         {"lr_min", c.lr_min},         {"weight_decay", c.weight_decay},
            {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs}, {"patience", c.patience},
            {"adam_beta1", c.adam_beta1}, {"adam_beta2", c.adam_beta2}, {"adam_eps", c.adam_eps},
            {"decay_mode", decay_mode},   {"schedule_unit", unit},      {"threads", c.threads}};
}

void run_train(TrainArgs& a, std::span<const std::string> argv) {
    if (a.decay_mode == "decoupled") {
        a.cfg.decay_mode = WeightDecayMode::decoupled;
    } else if (a.decay_mode == "coupled") {
        a.cfg.decay_mode = WeightDecayMode::coupled;
    } else {
        throw InvalidArgument("unknown decay mode \"" + a.decay_mode + "\"");
    }
    if (a.schedule_unit == "epoch") {
        a.cfg.schedule_unit = ScheduleUnit::epoch;
    } else if (a.schedule_unit == "step") {
        a.cfg.schedule_unit = ScheduleUnit::step;
    } else {
        throw InvalidArgument("unknown schedule unit \"" + a.schedule_unit + "\"");
    }
    a.cfg.seed = a.common.seed;
    a.cfg.validate();

    RunRecorder rec("train", argv, a.common.seed);
    auto vocabs = load_vocab_dir(a.vocab_dir, rec);
    if (!a.input_mode.empty() && parse_input_mode(a.input_mode) != vocabs.mode) {
        throw InvalidArgument("--input-mode " + a.input_mode + " does not match the vocabulary built for " +
                              input_mode_name(vocabs.mode));
    }
    a.model.in_vocab_size = vocabs.input.size();
    a.model.out_vocab_size = vocabs.output.size();
    a.model.validate();

    rec.input(a.train);
    rec.input(a.val);
    const auto train_pl = load_playlists(a.train);
    const auto val_pl = load_playlists(a.val);
    const EncodeLimits limits{a.max_input_len, a.model.max_title_len};
    std::vector<EncodedExample> train_set, val_set;
    for (const auto& p : train_pl) train_set.push_back(encode(p, vocabs.input, vocabs.output, vocabs.mode, limits));
    for (const auto& p : val_pl) val_set.push_back(encode(p, vocabs.input, vocabs.output, vocabs.mode, limits));

    const bool quiet = a.common.quiet;
    auto result = train(a.model, init_params(a.model, a.common.seed), train_set, val_set, a.cfg,
                        [quiet](const EpochLog& e) {
                            char buf[200];
                            std::snprintf(buf, sizeof buf, "epoch %zu lr %.6g train_nll %.6f val_nll %.6f (%.1fs)",
                                          e.epoch, e.lr, e.train_nll, e.val_nll, e.seconds);
                            log_line(quiet, buf);
                        });
    if (pinned_epoch()) {
        for (auto& e : result.log) e.seconds = 0.0;
    }

    Checkpoint ckpt;
    ckpt.config = a.model;
    ckpt.params = std::move(result.best);
    ckpt.input_mode = vocabs.mode;
    ckpt.input_vocab_sha256 = sha256_hex(vocabs.input.serialize());
    ckpt.output_vocab_sha256 = sha256_hex(vocabs.output.serialize());
    const fs::path dir = a.common.out_dir;
    save_checkpoint(dir / "model.ckpt", ckpt);
    write_file_atomic(dir / "train_log.csv", format_train_log(result.log));
    rec.output(dir / "model.ckpt");
    rec.output(dir / "train_log.csv");
    rec.config = {{"model", model_config_to_json(a.model)},
                  {"train", train_config_json(a.cfg, a.decay_mode, a.schedule_unit)},
                  {"input_mode", input_mode_name(vocabs.mode)},
                  {"max_input_len", a.max_input_len},
                  {"best_epoch", result.best_epoch},
                  {"best_val_nll", result.best_val_nll},
                  {"early_stopped", result.early_stopped},
                  {"diverged", result.diverged}};
    rec.finish(dir);
    if (result.diverged) throw NumericError("training diverged; the last good checkpoint was saved");
}

// ---- generate --------------------------------------------------------------

struct GenerateArgs {
    Common common;
    std::string checkpoint;
    std::string vocab_dir;
    std::string input;
    std::string strategy = "greedy";
    DecodeConfig cfg;
    std::size_t max_input_len = 128;
    unsigned threads = 1;
};

void run_generate(GenerateArgs& a, std::span<const std::string> argv) {
    a.cfg.strategy = parse_decode_strategy(a.strategy);
    a.cfg.validate();
    if (a.threads == 0) throw InvalidArgument("--threads must be at least 1");
    RunRecorder rec("generate", argv, a.common.seed);
    rec.input(a.checkpoint);
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const auto vocabs = load_vocab_dir(a.vocab_dir, rec);
    verify_vocabs(ckpt, vocabs.input, vocabs.output);
    rec.input(a.input);
    const auto playlists = load_playlists(a.input);
    const EncodeLimits limits{a.max_input_len, ckpt.config.max_title_len};

    std::vector<GeneratedTitle> out(playlists.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto ex = encode(playlists[i], vocabs.input, vocabs.output, ckpt.input_mode, limits);
            out[i] = generate(ckpt.params, ckpt.config, a.cfg, ex.input_ids);
        }
    };
    const std::size_t n = playlists.size();
    const std::size_t workers = std::min<std::size_t>(a.threads, std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, n * w / workers, n * (w + 1) / workers);
        for (auto& t : pool) t.join();
    }

    std::string lines;
    for (std::size_t i = 0; i < n; ++i) {
        lines += json{{"pid", playlists[i].pid},
                      {"title_tokens", decode_tokens(out[i].tokens, vocabs.output)},
                      {"score", out[i].score}}
                     .dump();
        lines += '\n';
    }
    const fs::path path = fs::path(a.common.out_dir) / "generations.jsonl";
    write_file_atomic(path, lines);
    rec.output(path);
    rec.config = {{"strategy", a.strategy},
                  {"beam_width", a.cfg.beam_width},
                  {"max_len", a.cfg.max_len},
                  {"length_penalty", a.cfg.length_penalty},
                  {"max_input_len", a.max_input_len},
                  {"threads", a.threads}};
    rec.finish(a.common.out_dir);
    log_line(a.common.quiet, "generate: " + std::to_string(n) + " titles");
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateArgs {
    Common common;
    std::string pairs;
    std::string generations;
    std::string references;
    std::string track_counts;
    std::string artist_counts;
    std::string embeddings;
    std::string checkpoint;
    std::string vocab_dir;
    std::size_t max_input_len = 128;
};

std::map<std::string, Tokens> read_generations(const fs::path& path) {
    std::map<std::string, Tokens> out;
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + " line " + std::to_string(line_no);
        try {
            const json j = json::parse(line);
            for (const char* f : {"pid", "title_tokens"}) {
                if (!j.contains(f)) throw MissingField(f, where);
            }
            out[j.at("pid").get<std::string>()] = j.at("title_tokens").get<Tokens>();
        } catch (const json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
    }
    return out;
}

void run_evaluate(EvaluateArgs& a, std::span<const std::string> argv) {
    const bool pair_mode = !a.pairs.empty();
    if (pair_mode == (!a.generations.empty() || !a.references.empty())) {
        throw InvalidArgument("give either --pairs or both --generations and --references");
    }
    if (!pair_mode && (a.generations.empty() || a.references.empty())) {
        throw InvalidArgument("--generations and --references must be given together");
    }
    if (a.track_counts.empty() != a.artist_counts.empty()) {
        throw InvalidArgument("--track-counts and --artist-counts must be given together");
    }
    if (a.checkpoint.empty() != a.vocab_dir.empty()) {
        throw InvalidArgument("--checkpoint and --vocab-dir must be given together");
    }
    if (pair_mode && (!a.track_counts.empty() || !a.checkpoint.empty())) {
        throw InvalidArgument("frequency buckets and NLL need --references playlists");
    }

    RunRecorder rec("evaluate", argv, a.common.seed);
    std::vector<EvalPair> pairs;
    std::vector<Playlist> refs;
    if (pair_mode) {
        rec.input(a.pairs);
        pairs = read_pairs_jsonl(a.pairs);
    } else {
        rec.input(a.generations);
        rec.input(a.references);
        const auto gens = read_generations(a.generations);
        refs = load_playlists(a.references);
        std::vector<std::string> missing;
        for (const auto& p : refs) {
            auto it = gens.find(p.pid);
            if (it == gens.end()) {
                missing.push_back(p.pid);
                continue;
            }
            EvalPair pair{p.pid, tokenize_title(p.title), it->second};
            if (pair.reference.empty()) throw ParseError("reference title of " + p.pid + " has no tokens");
            pairs.push_back(std::move(pair));
        }
        if (!missing.empty()) {
            throw InvalidArgument("no generation for " + std::to_string(missing.size()) + " reference playlists, first " +
                                  missing.front());
        }
    }

    std::map<std::string, FrequencyStats> stats;
    std::map<std::string, PairEmbeddings> embeddings;
    std::map<std::string, double> nll;
    EvalInputs inputs;
    inputs.pairs = pairs;
    if (!a.track_counts.empty()) {
        rec.input(a.track_counts);
        rec.input(a.artist_counts);
        FrequencyTable table;
        table.track_counts = read_counts_tsv(a.track_counts);
        table.artist_counts = read_counts_tsv(a.artist_counts);
        for (const auto& p : refs) stats[p.pid] = playlist_frequency_stats(p, table);
        inputs.stats = &stats;
    }
    if (!a.embeddings.empty()) {
        rec.input(a.embeddings);
        embeddings = read_embeddings(a.embeddings);
        inputs.embeddings = &embeddings;
    }
    if (!a.checkpoint.empty()) {
        rec.input(a.checkpoint);
        const Checkpoint ckpt = load_checkpoint(a.checkpoint);
        const auto vocabs = load_vocab_dir(a.vocab_dir, rec);
        verify_vocabs(ckpt, vocabs.input, vocabs.output);
        const EncodeLimits limits{a.max_input_len, ckpt.config.max_title_len};
        std::vector<EncodedExample> examples;
        for (const auto& p : refs) examples.push_back(encode(p, vocabs.input, vocabs.output, ckpt.input_mode, limits));
        const auto sums = example_nll(ckpt.params, ckpt.config, examples);
        for (std::size_t i = 0; i < refs.size(); ++i) {
            nll[refs[i].pid] = sums[i] / static_cast<double>(examples[i].target_ids.size() - 1);
        }
        inputs.nll = &nll;
    }

    const EvalReport report = evaluate(inputs);
    const fs::path dir = a.common.out_dir;
    write_file_atomic(dir / "report.json", pretty(report_to_json(report)));
    write_file_atomic(dir / "report.csv", report_to_csv(report));
    rec.output(dir / "report.json");
    rec.output(dir / "report.csv");
    if (!pair_mode) {
        write_pairs_jsonl(dir / "pairs.jsonl", pairs);
        rec.output(dir / "pairs.jsonl");
    }
    rec.config = {{"mode", pair_mode ? "pairs" : "generations"},
                  {"buckets", inputs.stats != nullptr},
                  {"embeddings", inputs.embeddings != nullptr},
                  {"nll", inputs.nll != nullptr},
                  {"max_input_len", a.max_input_len}};
    rec.finish(dir);
    char buf[200];
    std::snprintf(buf, sizeof buf, "evaluate: %zu pairs, BLEU-1 %.4f, ROUGE-1 %.4f, METEOR %.4f", pairs.size(),
                  report.corpus.bleu1, report.corpus.rouge1, report.corpus.meteor);
    log_line(a.common.quiet, buf);
}

// ---- report ----------------------------------------------------------------

struct ReportArgs {
    Common common;
    std::string report;
    std::size_t bins = 20;
    double trim_pct = 99.0;
};

void run_report(ReportArgs& a, std::span<const std::string> argv) {
    RunRecorder rec("report", argv, a.common.seed);
    rec.input(a.report);
    json j;
    try {
        j = json::parse(read_file(a.report));
    } catch (const json::exception& e) {
        throw ParseError(a.report + ": " + e.what());
    }
    const auto files = render_report(report_from_json(j), a.bins, a.trim_pct);
    const fs::path dir = a.common.out_dir;
    for (const auto& [name, content] : files) {
        write_file_atomic(dir / name, content);
        rec.output(dir / name);
    }
    rec.config = {{"bins", a.bins}, {"trim_pct", a.trim_pct}};
    rec.finish(dir);
    log_line(a.common.quiet, "report: " + std::to_string(files.size()) + " files");
}

std::string one_line(std::string s) {
    for (char& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

int fail(const std::string& kind, const std::string& message, int code) {
    std::cerr << "error: kind=" << kind << " message=" << one_line(message) << '\n';
    return code;
}

}  // namespace

int run(std::span<const std::string> args) {
    CLI::App app{"Playlist title generation toolkit", "playtitle"};
    app.require_subcommand(1, 1);
    app.set_config("--config", "", "Config file (TOML/INI); flags override it");

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Write a synthetic playlist corpus");
    add_common(s, synth.common);
    s->add_option("--zipf-exponent", synth.cfg.zipf_exponent)->capture_default_str();
    s->add_option("--n-playlists", synth.cfg.n_playlists)->capture_default_str();
    s->add_option("--n-tracks", synth.cfg.n_tracks)->capture_default_str();
    s->add_option("--n-artists", synth.cfg.n_artists)->capture_default_str();
    s->add_option("--artists-per-track", synth.cfg.artists_per_track)->capture_default_str();
    s->add_option("--n-genres", synth.cfg.n_genres)->capture_default_str();
    s->add_option("--start-date", synth.start)->capture_default_str();
    s->add_option("--end-date", synth.end)->capture_default_str();
    s->add_option("--min-tracks", synth.cfg.min_tracks)->capture_default_str();
    s->add_option("--max-tracks", synth.cfg.max_tracks)->capture_default_str();
    s->add_option("--recent-fraction", synth.cfg.recent_fraction)->capture_default_str();
    s->add_option("--recent-window-days", synth.cfg.recent_window_days)->capture_default_str();
    s->add_option("--noise-fraction", synth.cfg.noise_fraction)->capture_default_str();

    ConvertArgs convert;
    auto* c = app.add_subcommand("convert", "Convert a Melon or MPD dump to normalized JSONL");
    add_common(c, convert.common);
    c->add_option("--input", convert.input)->required()->check(CLI::ExistingFile);
    c->add_option("--format", convert.format)->capture_default_str();
    c->add_option("--song-meta", convert.song_meta)->check(CLI::ExistingFile);
    c->add_option("--mapping", convert.mapping)->check(CLI::ExistingFile);

    FilterArgs filter;
    auto* f = app.add_subcommand("filter", "Apply the playlist quality filter");
    add_common(f, filter.common);
    f->add_option("--input", filter.input)->required()->check(CLI::ExistingFile);
    f->add_option("--tags", filter.tags)->required()->check(CLI::ExistingFile);
    f->add_option("--language", filter.language);
    f->add_option("--min-title-tokens", filter.cfg.min_title_tokens)->capture_default_str();
    f->add_option("--min-avg-char-len", filter.cfg.min_avg_char_len)->capture_default_str();
    f->add_option("--min-tracks", filter.cfg.min_tracks)->capture_default_str();
    f->add_option("--tag-match", filter.tag_match)->capture_default_str();

    SplitArgs split;
    auto* sp = app.add_subcommand("split", "Chronological train/val/test split");
    add_common(sp, split.common);
    sp->add_option("--input", split.input)->required()->check(CLI::ExistingFile);
    sp->add_option("--cutoff", split.cutoff)->required();
    sp->add_option("--val-fraction", split.val_fraction)->capture_default_str();

    VocabArgs vocab;
    auto* v = app.add_subcommand("build-vocab", "Build input and output vocabularies");
    add_common(v, vocab.common);
    v->add_option("--train", vocab.train)->required()->check(CLI::ExistingFile);
    v->add_option("--input-mode", vocab.input_mode)->capture_default_str();
    v->add_option("--min-count", vocab.min_count)->capture_default_str();
    v->add_option("--output-min-count", vocab.output_min_count)->capture_default_str();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a title generation model");
    add_common(t, tr.common);
    t->add_option("--train", tr.train)->required()->check(CLI::ExistingFile);
    t->add_option("--val", tr.val)->required()->check(CLI::ExistingFile);
    t->add_option("--vocab-dir", tr.vocab_dir)->required()->check(CLI::ExistingDirectory);
    t->add_option("--input-mode", tr.input_mode, "Must match the vocabulary when given");
    t->add_option("--d-model", tr.model.d_model)->capture_default_str();
    t->add_option("--n-heads", tr.model.n_heads)->capture_default_str();
    t->add_option("--n-enc-layers", tr.model.n_enc_layers)->capture_default_str();
    t->add_option("--n-dec-layers", tr.model.n_dec_layers)->capture_default_str();
    t->add_option("--d-ff", tr.model.d_ff)->capture_default_str();
    t->add_option("--dropout", tr.model.dropout)->capture_default_str();
    t->add_option("--max-title-len", tr.model.max_title_len)->capture_default_str();
    t->add_flag("--use-input-positions", tr.model.use_input_positions);
    t->add_flag("--pre-norm", tr.model.pre_norm);
    t->add_option("--max-input-len", tr.max_input_len)->capture_default_str();
    t->add_option("--lr-max", tr.cfg.lr_max)->capture_default_str();
    t->add_option("--lr-min", tr.cfg.lr_min)->capture_default_str();
    t->add_option("--weight-decay", tr.cfg.weight_decay)->capture_default_str();
    t->add_option("--decay-mode", tr.decay_mode)->capture_default_str();
    t->add_option("--schedule-unit", tr.schedule_unit)->capture_default_str();
    t->add_option("--batch-size", tr.cfg.batch_size)->capture_default_str();
    t->add_option("--max-epochs", tr.cfg.max_epochs)->capture_default_str();
    t->add_option("--patience", tr.cfg.patience)->capture_default_str();
    t->add_option("--adam-beta1", tr.cfg.adam_beta1)->capture_default_str();
    t->add_option("--adam-beta2", tr.cfg.adam_beta2)->capture_default_str();
    t->add_option("--adam-eps", tr.cfg.adam_eps)->capture_default_str();
    t->add_option("--threads", tr.cfg.threads)->capture_default_str();

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Generate titles for playlists");
    add_common(g, gen.common);
    g->add_option("--checkpoint", gen.checkpoint)->required()->check(CLI::ExistingFile);
    g->add_option("--vocab-dir", gen.vocab_dir)->required()->check(CLI::ExistingDirectory);
    g->add_option("--input", gen.input)->required()->check(CLI::ExistingFile);
    g->add_option("--strategy", gen.strategy)->capture_default_str();
    g->add_option("--beam-width", gen.cfg.beam_width)->capture_default_str();
    g->add_option("--max-len", gen.cfg.max_len)->capture_default_str();
    g->add_option("--length-penalty", gen.cfg.length_penalty)->capture_default_str();
    g->add_option("--max-input-len", gen.max_input_len)->capture_default_str();
    g->add_option("--threads", gen.threads)->capture_default_str();

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "Score generated titles against references");
    add_common(e, ev.common);
    e->add_option("--pairs", ev.pairs)->check(CLI::ExistingFile);
    e->add_option("--generations", ev.generations)->check(CLI::ExistingFile);
    e->add_option("--references", ev.references)->check(CLI::ExistingFile);
    e->add_option("--track-counts", ev.track_counts)->check(CLI::ExistingFile);
    e->add_option("--artist-counts", ev.artist_counts)->check(CLI::ExistingFile);
    e->add_option("--embeddings", ev.embeddings)->check(CLI::ExistingFile);
    e->add_option("--checkpoint", ev.checkpoint)->check(CLI::ExistingFile);
    e->add_option("--vocab-dir", ev.vocab_dir)->check(CLI::ExistingDirectory);
    e->add_option("--max-input-len", ev.max_input_len)->capture_default_str();

    ReportArgs rep;
    auto* r = app.add_subcommand("report", "Render plot-ready data from an evaluation report");
    add_common(r, rep.common);
    r->add_option("--report", rep.report)->required()->check(CLI::ExistingFile);
    r->add_option("--bins", rep.bins)->capture_default_str();
    r->add_option("--trim-pct", rep.trim_pct)->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        return fail("UsageError", ex.what(), 2);
    }

    try {
        if (s->parsed()) run_synth(synth, args);
        if (c->parsed()) run_convert(convert, args);
        if (f->parsed()) run_filter(filter, args);
        if (sp->parsed()) run_split(split, args);
        if (v->parsed()) run_build_vocab(vocab, args);
        if (t->parsed()) run_train(tr, args);
        if (g->parsed()) run_generate(gen, args);
        if (e->parsed()) run_evaluate(ev, args);
        if (r->parsed()) run_report(rep, args);
    } catch (const Error& ex) {
        return fail(ex.code(), ex.what(), ex.kind() == ErrorKind::usage ? 2 : 1);
    } catch (const fs::filesystem_error& ex) {
        return fail("IOError", ex.what(), 1);
    } catch (const std::exception& ex) {
        return fail("RuntimeError", ex.what(), 1);
    }
    return 0;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace playtitle::cli
