#include <algorithm>

#include "doctest.h"
#include "playtitle/corpus.hpp"
#include "playtitle/error.hpp"
#include "playtitle/hashing.hpp"
#include "playtitle/unicode.hpp"
#include "support.hpp"

using namespace playtitle;
using testing::playlist;

namespace {

Playlist with_tracks(std::string pid, std::string title, std::size_t n) {
    Playlist p;
    p.pid = std::move(pid);
    p.title = std::move(title);
    p.modified_at = Date(2019, 3, 1);
    for (std::size_t i = 0; i < n; ++i) p.tracks.push_back({"t" + std::to_string(i), {"a1"}});
    return p;
}

}  // namespace

TEST_CASE("normalize_token folds case and composes") {
    CHECK(normalize_token("Rock ") == "rock");
    CHECK(normalize_token("힙합") == "힙합");
    // Case-folding oracle: Python unicodedata NFC + str.casefold.
    CHECK(normalize_token("CAF\xC3\x89") == "caf\xC3\xA9");
    CHECK(normalize_token("CAFE\xCC\x81") == "caf\xC3\xA9");
    CHECK(normalize_token("Stra\xC3\x9F" "e") == "strasse");
    CHECK(normalize_token("\xCE\xA3\xCE\x8A\xCE\xA3\xCE\xA5\xCE\xA6\xCE\x9F\xCE\xA3") ==
          "\xCF\x83\xCE\xAF\xCF\x83\xCF\x85\xCF\x86\xCE\xBF\xCF\x83");
    CHECK(normalize_token("\xEF\xBC\xA1\xEF\xBC\xA2\xEF\xBC\xA3") == "\xEF\xBD\x81\xEF\xBD\x82\xEF\xBD\x83");
    CHECK(normalize_token("\xC2\xA0Rock\xE3\x80\x80") == "rock");
}

TEST_CASE("normalize_token rejects invalid UTF-8") {
    CHECK_THROWS_AS(normalize_token("bad\xFF"), ParseError);
}

TEST_CASE("tokenize_title splits on Unicode whitespace") {
    CHECK(tokenize_title("Best  Jogging Music") == std::vector<std::string>{"best", "jogging", "music"});
    CHECK(tokenize_title("").empty());
    CHECK(tokenize_title("   \t ").empty());
    CHECK(tokenize_title("카페를 가득채우는 감성노래") ==
          std::vector<std::string>{"카페를", "가득채우는", "감성노래"});
    CHECK(tokenize_title("a\xE3\x80\x80" "b\xC2\xA0" "c\nd") == std::vector<std::string>{"a", "b", "c", "d"});
    for (const auto& tok : tokenize_title(" lofi\tbeats  to\r\nstudy ")) {
        CHECK_FALSE(tok.empty());
        CHECK(tok.find_first_of(" \t\r\n") == std::string::npos);
    }
}

TEST_CASE("scalar_count counts code points") {
    CHECK(scalar_count("abc") == 3);
    CHECK(scalar_count("caf\xC3\xA9") == 4);
    CHECK(scalar_count("감성노래") == 4);
    CHECK(scalar_count("") == 0);
}

TEST_CASE("Date parsing") {
    CHECK(Date::parse("2019-03-01").to_string() == "2019-03-01");
    CHECK(Date::parse("2013-12-19 18:36:19.000") == Date(2013, 12, 19));
    CHECK(Date::parse("2020-02-29T10:00:00Z") == Date(2020, 2, 29));
    CHECK(Date::from_epoch_seconds(1500000000) == Date(2017, 7, 14));
    CHECK_THROWS_AS(Date::parse("2019-02-30"), ParseError);
    CHECK_THROWS_AS(Date::parse("yesterday"), ParseError);
    CHECK_THROWS_AS(Date::parse("2019-03-01x"), ParseError);
}

TEST_CASE("normalized JSONL ingest") {
    const std::string line =
        R"({"pid":"p1","title":"lofi beats to study","modified_at":"2019-03-01","tracks":[{"track_id":"t1","artist_ids":["a1"]}]})";
    const auto ps = parse_normalized_jsonl(line + "\n");
    REQUIRE(ps.size() == 1);
    CHECK(ps[0].pid == "p1");
    CHECK(ps[0].title == "lofi beats to study");
    CHECK(ps[0].modified_at == Date(2019, 3, 1));
    REQUIRE(ps[0].tracks.size() == 1);
    CHECK(ps[0].tracks[0] == TrackRef{"t1", {"a1"}});

    CHECK(parse_normalized_jsonl("").empty());

    SUBCASE("round trip") {
        auto p = playlist("x", "chill mix", "2020-01-02", {{"t1", {"a1", "a2"}}, {"t2", {"a3"}}});
        const auto back = parse_normalized_jsonl(playlist_to_json_line(p) + "\n");
        REQUIRE(back.size() == 1);
        CHECK(back[0] == p);
    }
    SUBCASE("track order preserved") {
        const auto back = parse_normalized_jsonl(
            R"({"pid":"p","title":"t","modified_at":"2019-01-01","tracks":[{"track_id":"z","artist_ids":["a"]},{"track_id":"b","artist_ids":["a"]},{"track_id":"m","artist_ids":["a"]}]})");
        REQUIRE(back[0].tracks.size() == 3);
        CHECK(back[0].tracks[0].track_id == "z");
        CHECK(back[0].tracks[2].track_id == "m");
    }
}

TEST_CASE("normalized JSONL errors") {
    SUBCASE("missing title") {
        const std::string text = R"({"pid":"p1","title":"ok","modified_at":"2019-03-01","tracks":[]})"
                                 "\n"
                                 R"({"pid":"p2","modified_at":"2019-03-01","tracks":[]})";
        try {
            parse_normalized_jsonl(text);
            FAIL("expected MissingField");
        } catch (const MissingField& e) {
            CHECK(e.field() == "title");
            const std::string msg = e.what();
            CHECK(msg.find("MissingField(\"title\")") != std::string::npos);
            CHECK(msg.find("line 2") != std::string::npos);
            CHECK(msg.find("offset") != std::string::npos);
        }
    }
    SUBCASE("bad date carries raw value") {
        try {
            parse_normalized_jsonl(R"({"pid":"p1","title":"a b c","modified_at":"03/01/2019","tracks":[]})");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("03/01/2019") != std::string::npos);
        }
    }
    SUBCASE("duplicate pid") {
        const std::string l = R"({"pid":"p1","title":"a","modified_at":"2019-03-01","tracks":[]})";
        CHECK_THROWS_AS(parse_normalized_jsonl(l + "\n" + l + "\n"), ParseError);
    }
    SUBCASE("empty artist list") {
        CHECK_THROWS_AS(parse_normalized_jsonl(
                            R"({"pid":"p1","title":"a","modified_at":"2019-03-01","tracks":[{"track_id":"t","artist_ids":[]}]})"),
                        ParseError);
    }
    SUBCASE("malformed json") {
        CHECK_THROWS_AS(parse_normalized_jsonl("{not json}\n"), ParseError);
    }
}

TEST_CASE("MPD slice adapter") {
    testing::TempDir dir;
    write_file_atomic(dir / "slice.json", R"({"info":{},"playlists":[
        {"pid":7,"name":"Throwbacks","modified_at":1500000000,
         "tracks":[{"track_uri":"spotify:track:1","artist_uri":"spotify:artist:9"},
                   {"track_uri":"spotify:track:2","artist_uri":"spotify:artist:8"}]}]})");
    const auto ps = ingest(dir / "slice.json", InputFormat::mpd_slice);
    REQUIRE(ps.size() == 1);
    CHECK(ps[0].pid == "7");
    CHECK(ps[0].title == "Throwbacks");
    CHECK(ps[0].modified_at == Date(2017, 7, 14));
    CHECK(ps[0].tracks[1] == TrackRef{"spotify:track:2", {"spotify:artist:8"}});

    SUBCASE("mapping override") {
        write_file_atomic(dir / "alt.json", R"([{"pid":"q","title":"x y z","ts":0,"tracks":[{"track_uri":"t","artist_uri":"a"}]}])");
        write_file_atomic(dir / "map.json", R"({"mpd_title":"title","mpd_modified_at":"ts"})");
        IngestOptions opts;
        opts.mapping = AdapterMapping::load(dir / "map.json");
        const auto alt = ingest(dir / "alt.json", InputFormat::mpd_slice, opts);
        CHECK(alt[0].title == "x y z");
        CHECK(alt[0].modified_at == Date(1970, 1, 1));
    }
    SUBCASE("unknown mapping key") {
        write_file_atomic(dir / "map.json", R"({"mpd_titel":"title"})");
        CHECK_THROWS_AS(AdapterMapping::load(dir / "map.json"), ParseError);
    }
}

TEST_CASE("Melon adapter joins song_meta") {
    testing::TempDir dir;
    write_file_atomic(dir / "train.json", R"([
        {"id":61281,"plylst_title":"여행같은 음악","updt_date":"2013-12-19 18:36:19.000","songs":[525514,129701]}])");
    write_file_atomic(dir / "song_meta.json", R"([
        {"id":525514,"artist_id_basket":[2727]},
        {"id":129701,"artist_id_basket":[29966,3361]}])");
    IngestOptions opts;
    opts.song_meta = dir / "song_meta.json";
    const auto ps = ingest(dir / "train.json", InputFormat::melon, opts);
    REQUIRE(ps.size() == 1);
    CHECK(ps[0].pid == "61281");
    CHECK(ps[0].modified_at == Date(2013, 12, 19));
    CHECK(ps[0].tracks[0] == TrackRef{"525514", {"2727"}});
    CHECK(ps[0].tracks[1] == TrackRef{"129701", {"29966", "3361"}});

    CHECK_THROWS_AS(ingest(dir / "train.json", InputFormat::melon), InvalidArgument);
    write_file_atomic(dir / "song_meta.json", R"([{"id":525514,"artist_id_basket":[2727]}])");
    CHECK_THROWS_AS(ingest(dir / "train.json", InputFormat::melon, opts), ParseError);
}

TEST_CASE("tag lists") {
    testing::TempDir dir;
    write_file_atomic(dir / "tags.txt", "# english tags\nRock\nLofi \n\nrock\n힙합\n");
    const auto tags = TagList::load(dir / "tags.txt", "en");
    CHECK(tags.tags == std::set<std::string>{"rock", "lofi", "힙합"});
    CHECK(tags.language == "en");
    write_file_atomic(dir / "empty.txt", "# nothing\n\n");
    CHECK_THROWS_AS(TagList::load(dir / "empty.txt"), InvalidArgument);
}

TEST_CASE("passes_filter criteria") {
    const FilterConfig cfg;
    SUBCASE("all four hold") {
        const auto d = passes_filter(with_tracks("p", "lofi beats to study", 5), cfg,
                                     TagList::from_tags(std::vector<std::string>{"lofi"}));
        CHECK(d.pass);
        CHECK_FALSE(d.failed.has_value());
    }
    SUBCASE("too few tokens") {
        const auto d = passes_filter(with_tracks("p", "my favorites", 5), cfg,
                                     TagList::from_tags(std::vector<std::string>{"favorites"}));
        CHECK_FALSE(d.pass);
        CHECK(d.failed == FilterCriterion::title_tokens);
    }
    SUBCASE("too few tracks") {
        const auto d = passes_filter(with_tracks("p", "chill hip hop mix", 1), cfg,
                                     TagList::from_tags(std::vector<std::string>{"hip"}));
        CHECK(d.failed == FilterCriterion::track_count);
    }
    SUBCASE("short tokens") {
        // (1 + 1 + 3) / 3 < 2
        const auto d = passes_filter(with_tracks("p", "a b pop", 3), cfg, TagList::from_tags(std::vector<std::string>{"pop"}));
        CHECK(d.failed == FilterCriterion::avg_char_len);
    }
    SUBCASE("average counts scalars, not bytes") {
        // 5 characters over 3 tokens, although the title is 15 bytes.
        const auto tags = TagList::from_tags(std::vector<std::string>{"비"});
        CHECK(passes_filter(with_tracks("p", "비 오는 날에", 3), cfg, tags).failed == FilterCriterion::avg_char_len);
        CHECK(passes_filter(with_tracks("p", "비가 오는 날에", 3), cfg, tags).failed == FilterCriterion::tag_match);
    }
    SUBCASE("first failing criterion reported") {
        const auto d = passes_filter(with_tracks("p", "a b", 0), cfg, TagList::from_tags(std::vector<std::string>{"x"}));
        CHECK(d.failed == FilterCriterion::title_tokens);
    }
    SUBCASE("tag match modes") {
        const auto tags = TagList::from_tags(std::vector<std::string>{"힙합"});
        const auto p = with_tracks("p", "신나는 힙합음악 모음", 3);
        CHECK(passes_filter(p, cfg, tags).failed == FilterCriterion::tag_match);
        FilterConfig sub = cfg;
        sub.tag_match_mode = TagMatchMode::substring;
        CHECK(passes_filter(p, sub, tags).pass);
    }
    SUBCASE("tag match is case-insensitive") {
        const auto d = passes_filter(with_tracks("p", "LOFI Beats Forever", 2), cfg,
                                     TagList::from_tags(std::vector<std::string>{"Lofi"}));
        CHECK(d.pass);
    }
    SUBCASE("tag order is irrelevant") {
        std::vector<std::string> raw{"rock", "jazz", "lofi", "pop"};
        const auto p = with_tracks("p", "smooth jazz evening", 4);
        const bool expected = passes_filter(p, cfg, TagList::from_tags(raw)).pass;
        std::sort(raw.begin(), raw.end());
        do {
            CHECK(passes_filter(p, cfg, TagList::from_tags(raw)).pass == expected);
        } while (std::next_permutation(raw.begin(), raw.end()));
    }
}

TEST_CASE("FilterConfig validation") {
    FilterConfig cfg;
    cfg.min_tracks = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = FilterConfig{};
    cfg.min_avg_char_len = 0.5;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    CHECK_THROWS_AS(parse_tag_match_mode("fuzzy"), InvalidArgument);
}

TEST_CASE("filter_corpus counts and order") {
    const auto tags = TagList::from_tags(std::vector<std::string>{"lofi", "rock", "jazz"});
    const FilterConfig cfg;
    SUBCASE("one of three passes") {
        std::vector<Playlist> ps{with_tracks("a", "my favorites", 5), with_tracks("b", "lofi beats to study", 5),
                                 with_tracks("c", "lofi beats forever", 1)};
        const auto r = filter_corpus(ps, cfg, tags);
        REQUIRE(r.kept.size() == 1);
        CHECK(r.kept[0].pid == "b");
        CHECK(r.stats.total_rejected() == 2);
    }
    SUBCASE("all pass") {
        std::vector<Playlist> ps{with_tracks("a", "lofi beats to study", 5), with_tracks("b", "classic rock anthems", 3)};
        const auto r = filter_corpus(ps, cfg, tags);
        CHECK(r.kept.size() == 2);
        CHECK(r.stats.rejected == std::array<std::size_t, 4>{0, 0, 0, 0});
    }
    SUBCASE("hand-labelled mixed fixture") {
        // label: 0 = pass, otherwise the first failing criterion
        const std::vector<std::pair<Playlist, int>> fixture{
            {with_tracks("p01", "lofi beats to study", 5), 0},
            {with_tracks("p02", "rock", 5), 1},
            {with_tracks("p03", "jazz for sleep", 1), 3},
            {with_tracks("p04", "a b c", 4), 2},
            {with_tracks("p05", "songs for driving", 4), 4},
            {with_tracks("p06", "Smooth JAZZ Evening", 2), 0},
            {with_tracks("p07", "x jazz", 0), 1},
            {with_tracks("p08", "ab cd jazz", 2), 0},
            {with_tracks("p09", "a bb jazz", 2), 0},
            {with_tracks("p10", "rockabilly hits forever", 9), 4},
        };
        std::vector<Playlist> ps;
        std::array<std::size_t, 4> expected{};
        std::vector<std::string> expected_kept;
        for (const auto& [p, label] : fixture) {
            ps.push_back(p);
            if (label == 0) {
                expected_kept.push_back(p.pid);
            } else {
                ++expected[static_cast<std::size_t>(label - 1)];
            }
        }
        const auto r = filter_corpus(ps, cfg, tags);
        CHECK(r.stats.rejected == expected);
        std::vector<std::string> kept;
        for (const auto& p : r.kept) kept.push_back(p.pid);
        CHECK(kept == expected_kept);
        CHECK(r.stats.kept + r.stats.total_rejected() == ps.size());

        // Idempotence.
        const auto again = filter_corpus(r.kept, cfg, tags);
        CHECK(again.kept == r.kept);
        CHECK(again.stats.total_rejected() == 0);

        for (const auto& p : r.kept) {
            const auto toks = tokenize_title(p.title);
            CHECK(toks.size() >= 3);
            std::size_t chars = 0;
            for (const auto& t : toks) chars += scalar_count(t);
            CHECK(static_cast<double>(chars) / static_cast<double>(toks.size()) >= 2.0);
            CHECK(p.tracks.size() >= 2);
        }
    }
}
