#include <sys/wait.h>

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "playtitle/checkpoint.hpp"
#include "playtitle/cli.hpp"
#include "playtitle/corpus.hpp"
#include "playtitle/hashing.hpp"
#include "playtitle/metrics.hpp"
#include "playtitle/splitter.hpp"
#include "support.hpp"

using namespace playtitle;
using nlohmann::json;

namespace {

struct CliResult {
    int code = 0;
    std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
    std::ostringstream captured;
    auto* old = std::cerr.rdbuf(captured.rdbuf());
    CliResult r;
    r.code = cli::run(args);
    std::cerr.rdbuf(old);
    r.err = captured.str();
    return r;
}

// Exit status and stderr of the installed binary.
CliResult run_binary(const std::string& args, const testing::TempDir& dir) {
    const auto err_path = dir / "stderr.txt";
    const std::string cmd = std::string(PLAYTITLE_CLI) + " " + args + " 2>" + err_path.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(err_path)};
}

json read_json(const std::filesystem::path& p) { return json::parse(read_file(p)); }

std::string str(const std::filesystem::path& p) { return p.string(); }

void small_synth(const std::filesystem::path& out, std::size_t n = 240) {
    const auto r = run_cli({"synth", "--n-playlists", std::to_string(n), "--n-tracks", "600", "--n-artists", "60",
                            "--n-genres", "4", "--seed", "3", "--quiet", "--out-dir", str(out)});
    REQUIRE_MESSAGE(r.code == 0, r.err);
}

}  // namespace

TEST_CASE("synth writes a corpus and a manifest") {
    testing::TempDir dir;
    small_synth(dir / "a");
    small_synth(dir / "b");
    CHECK(read_file(dir / "a" / "corpus.jsonl") == read_file(dir / "b" / "corpus.jsonl"));
    CHECK(read_file(dir / "a" / "tags.txt") == read_file(dir / "b" / "tags.txt"));
    const auto m = read_json(dir / "a" / "synth.manifest.json");
    CHECK(m.at("command") == "synth");
    CHECK(m.at("seed") == 3);
    CHECK(m.at("config").at("n_playlists") == 240);
    const auto& outs = m.at("outputs");
    REQUIRE(outs.size() >= 1);
    for (const auto& o : outs) CHECK(o.at("sha256") == sha256_file(o.at("path").get<std::string>()));
    CHECK(parse_normalized_jsonl(read_file(dir / "a" / "corpus.jsonl")).size() == 240);
}

TEST_CASE("split manifest records the requested values") {
    testing::TempDir dir;
    small_synth(dir / "s");
    const auto r = run_cli({"split", "--input", str(dir / "s" / "corpus.jsonl"), "--cutoff", "2020-01-01",
                            "--val-fraction", "0.5", "--seed", "7", "--quiet", "--out-dir", str(dir / "sp")});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto m = read_json(dir / "sp" / "split.manifest.json");
    CHECK(m.at("seed") == 7);
    CHECK(m.at("config").at("cutoff") == "2020-01-01");
    CHECK(m.at("config").at("val_fraction") == 0.5);
    const auto sm = read_split_manifest(dir / "sp" / "split_manifest.json");
    CHECK(sm.config.cutoff_date == Date(2020, 1, 1));
    CHECK(sm.config.seed == 7);
    CHECK(sm.config.val_fraction_of_holdout == 0.5);

    // Re-running the recorded argv reproduces every recorded output.
    const auto argv = m.at("argv").get<std::vector<std::string>>();
    const auto before = m.at("outputs");
    REQUIRE(run_cli(argv).code == 0);
    for (const auto& o : before) CHECK(sha256_file(o.at("path").get<std::string>()) == o.at("sha256"));
}

TEST_CASE("config file sits between defaults and flags") {
    testing::TempDir dir;
    small_synth(dir / "s");
    write_file_atomic(dir / "cfg.ini", "[split]\nval-fraction=0.25\ncutoff=2020-03-01\n");
    auto r = run_cli({"--config", str(dir / "cfg.ini"), "split", "--input", str(dir / "s" / "corpus.jsonl"), "--quiet",
                      "--out-dir", str(dir / "a")});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto m = read_json(dir / "a" / "split.manifest.json");
    CHECK(m.at("config").at("val_fraction") == 0.25);
    CHECK(m.at("config").at("cutoff") == "2020-03-01");
    r = run_cli({"--config", str(dir / "cfg.ini"), "split", "--input", str(dir / "s" / "corpus.jsonl"),
                 "--val-fraction", "0.75", "--quiet", "--out-dir", str(dir / "b")});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    m = read_json(dir / "b" / "split.manifest.json");
    CHECK(m.at("config").at("val_fraction") == 0.75);
    CHECK(m.at("config").at("cutoff") == "2020-03-01");
}

TEST_CASE("artist and track checkpoints differ only in the input side") {
    testing::TempDir dir;
    small_synth(dir / "s");
    REQUIRE(run_cli({"split", "--input", str(dir / "s" / "corpus.jsonl"), "--cutoff", "2020-07-01", "--quiet",
                     "--out-dir", str(dir / "sp")})
                .code == 0);
    for (const char* mode : {"artist", "track"}) {
        const auto vdir = dir / (std::string("v_") + mode);
        auto r = run_cli({"build-vocab", "--train", str(dir / "sp" / "train.jsonl"), "--input-mode", mode, "--quiet",
                          "--out-dir", str(vdir)});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        r = run_cli({"train", "--train", str(dir / "sp" / "train.jsonl"), "--val", str(dir / "sp" / "val.jsonl"),
                     "--vocab-dir", str(vdir), "--input-mode", mode, "--d-model", "8", "--n-heads", "2",
                     "--n-enc-layers", "1", "--n-dec-layers", "1", "--d-ff", "16", "--max-epochs", "1", "--quiet",
                     "--out-dir", str(dir / (std::string("m_") + mode))});
        REQUIRE_MESSAGE(r.code == 0, r.err);
    }
    const auto a = load_checkpoint(dir / "m_artist" / "model.ckpt");
    const auto t = load_checkpoint(dir / "m_track" / "model.ckpt");
    CHECK(a.input_mode == InputMode::artist);
    CHECK(t.input_mode == InputMode::track);
    CHECK(a.config.in_vocab_size < t.config.in_vocab_size);
    auto ca = model_config_to_json(a.config);
    auto ct = model_config_to_json(t.config);
    ca.erase("in_vocab_size");
    ct.erase("in_vocab_size");
    CHECK(ca == ct);
    CHECK(a.output_vocab_sha256 == t.output_vocab_sha256);
    CHECK(a.input_vocab_sha256 != t.input_vocab_sha256);
    REQUIRE(a.params.params.size() == t.params.params.size());
    for (std::size_t i = 0; i < a.params.params.size(); ++i) {
        const auto& pa = a.params.params[i];
        const auto& pt = t.params.params[i];
        CHECK(pa.name == pt.name);
        if (pa.name == "enc.embed") {
            CHECK(pa.value.cols == pt.value.cols);
            CHECK(pa.value.rows != pt.value.rows);
        } else {
            CHECK(pa.value.rows == pt.value.rows);
            CHECK(pa.value.cols == pt.value.cols);
        }
    }
    const auto mismatch = run_cli({"train", "--train", str(dir / "sp" / "train.jsonl"), "--val",
                                   str(dir / "sp" / "val.jsonl"), "--vocab-dir", str(dir / "v_artist"),
                                   "--input-mode", "track", "--quiet", "--out-dir", str(dir / "x")});
    CHECK(mismatch.code == 2);
}

TEST_CASE("full pipeline") {
    testing::TempDir dir;
    small_synth(dir / "s", 400);
    auto ok = [](const CliResult& r) { REQUIRE_MESSAGE(r.code == 0, r.err); };
    ok(run_cli({"filter", "--input", str(dir / "s" / "corpus.jsonl"), "--tags", str(dir / "s" / "tags.txt"), "--quiet",
                "--out-dir", str(dir / "f")}));
    const auto stats = read_json(dir / "f" / "filter_stats.json");
    CHECK(stats.at("kept").get<int>() > 300);
    ok(run_cli({"split", "--input", str(dir / "f" / "filtered.jsonl"), "--cutoff", "2020-07-01", "--quiet",
                "--out-dir", str(dir / "sp")}));
    ok(run_cli({"build-vocab", "--train", str(dir / "sp" / "train.jsonl"), "--input-mode", "artist", "--quiet",
                "--out-dir", str(dir / "v")}));
    ok(run_cli({"train", "--train", str(dir / "sp" / "train.jsonl"), "--val", str(dir / "sp" / "val.jsonl"),
                "--vocab-dir", str(dir / "v"), "--d-model", "16", "--n-heads", "2", "--n-enc-layers", "1",
                "--n-dec-layers", "1", "--d-ff", "32", "--max-epochs", "3", "--batch-size", "32", "--quiet",
                "--out-dir", str(dir / "m")}));
    const auto log = read_file(dir / "m" / "train_log.csv");
    CHECK(std::count(log.begin(), log.end(), '\n') == 4);
    ok(run_cli({"generate", "--checkpoint", str(dir / "m" / "model.ckpt"), "--vocab-dir", str(dir / "v"), "--input",
                str(dir / "sp" / "test.jsonl"), "--strategy", "beam", "--beam-width", "2", "--threads", "2", "--quiet",
                "--out-dir", str(dir / "g")}));
    const auto test_set = parse_normalized_jsonl(read_file(dir / "sp" / "test.jsonl"));
    const auto gens = read_file(dir / "g" / "generations.jsonl");
    CHECK(static_cast<std::size_t>(std::count(gens.begin(), gens.end(), '\n')) == test_set.size());
    ok(run_cli({"evaluate", "--generations", str(dir / "g" / "generations.jsonl"), "--references",
                str(dir / "sp" / "test.jsonl"), "--track-counts", str(dir / "sp" / "track_counts.tsv"),
                "--artist-counts", str(dir / "sp" / "artist_counts.tsv"), "--checkpoint", str(dir / "m" / "model.ckpt"),
                "--vocab-dir", str(dir / "v"), "--quiet", "--out-dir", str(dir / "e")}));
    const auto report = report_from_json(read_json(dir / "e" / "report.json"));
    CHECK(report.corpus.pairs == test_set.size());
    CHECK(report.per_pair.size() == test_set.size());
    CHECK(report.corpus.nll.has_value());
    CHECK(report.by_bucket_ft.has_value());
    CHECK(report.by_bucket_fa.has_value());
    CHECK(read_pairs_jsonl(dir / "e" / "pairs.jsonl").size() == test_set.size());
    ok(run_cli({"report", "--report", str(dir / "e" / "report.json"), "--bins", "10", "--quiet", "--out-dir",
                str(dir / "r")}));
    for (const char* f : {"hist_ft.csv", "hist_fa.csv", "distinct.csv", "buckets.csv"}) {
        CHECK(std::filesystem::exists(dir / "r" / f));
    }
    for (const char* m : {"f/filter", "sp/split", "v/build-vocab", "m/train", "g/generate", "e/evaluate", "r/report"}) {
        CHECK(std::filesystem::exists(dir / (std::string(m) + ".manifest.json")));
    }
    // Pairs mode scores the written pairs identically.
    ok(run_cli({"evaluate", "--pairs", str(dir / "e" / "pairs.jsonl"), "--quiet", "--out-dir", str(dir / "e2")}));
    const auto again = report_from_json(read_json(dir / "e2" / "report.json"));
    CHECK(again.corpus.bleu1 == report.corpus.bleu1);
    CHECK(again.corpus.meteor == report.corpus.meteor);
}

TEST_CASE("errors and exit codes") {
    testing::TempDir dir;
    auto r = run_binary("frobnicate --out-dir " + str(dir / "x"), dir);
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: kind=UsageError message=", 0) == 0);
    r = run_binary("synth --bogus-flag 1 --out-dir " + str(dir / "x"), dir);
    CHECK(r.code == 2);
    r = run_binary("synth", dir);
    CHECK(r.code == 2);
    r = run_binary("filter --input " + str(dir / "missing.jsonl") + " --tags " + str(dir / "missing.txt") +
                       " --out-dir " + str(dir / "x"),
                   dir);
    CHECK(r.code == 2);

    write_file_atomic(dir / "bad.jsonl", "{\"pid\": \"p1\"}\n");
    write_file_atomic(dir / "tags.txt", "jazz\n");
    r = run_binary("filter --input " + str(dir / "bad.jsonl") + " --tags " + str(dir / "tags.txt") + " --out-dir " +
                       str(dir / "x"),
                   dir);
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: kind=MissingField message=", 0) == 0);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

    testing::TempDir corpus;
    small_synth(corpus / "s", 50);
    r = run_binary("split --input " + str(corpus / "s" / "corpus.jsonl") + " --cutoff 1990-01-01 --out-dir " +
                       str(dir / "x"),
                   dir);
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error: kind=DegenerateSplit message=", 0) == 0);

    const auto in_proc = run_cli({"evaluate", "--out-dir", str(dir / "x")});
    CHECK(in_proc.code == 2);
    CHECK(in_proc.err.find("kind=InvalidArgument") != std::string::npos);
}
