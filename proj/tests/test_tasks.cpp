#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "corelnet/tasks.hpp"

using namespace corelnet;

namespace {

const TaskContext& ctx() {
    static TaskContext c = TaskContext::make(16, 2022);  // small canvas keeps tests quick
    return c;
}

Episode make(const std::string& task, int m, bool test_side, long index, uint64_t stream = 77) {
    TaskConfig cfg = task_from_name(task);
    Split split = split_glyphs(cfg, m, 5);
    return gen_episode(ctx(), cfg, split, test_side, stream, index);
}

}  // namespace

TEST_CASE("task names round-trip and carry the right shapes") {
    for (const auto& name : all_task_names()) {
        TaskConfig cfg = task_from_name(name);
        CHECK(cfg.name() == name);
        TaskInfo info = task_info(cfg);
        CHECK(info.seq_len >= 2);
        CHECK(info.num_classes >= 2);
    }
    CHECK(task_info(task_from_name("same_diff")).seq_len == 2);
    CHECK(task_info(task_from_name("rmts")).seq_len == 6);
    CHECK(task_info(task_from_name("dist3")).seq_len == 9);
    CHECK(task_info(task_from_name("identity_rules")).seq_len == 9);
    CHECK(task_info(task_from_name("rmts3")).seq_len == 9);
    CHECK(task_info(task_from_name("same_diff6")).seq_len == 6);
    CHECK(task_info(task_from_name("identity_rules4")).seq_len == 13);
    CHECK(task_info(task_from_name("identity_rules4")).num_classes == 6);
    // distribution-of-10: 3N images, N+1 options
    CHECK(task_info(task_from_name("dist10")).seq_len == 30);
    CHECK(task_info(task_from_name("dist10")).num_classes == 11);
    CHECK(task_info(task_from_name("separated_inputs")).seq_len == 4);
    CHECK_THROWS_AS(task_from_name("no_such_task"), Error);
    CHECK_THROWS_AS(task_from_name("rmts3_spurious"), Error);
}

TEST_CASE("split respects m and k_min") {
    TaskConfig sd = task_from_name("same_diff");
    Split s = split_glyphs(sd, 95, 3);
    CHECK(s.train_ids.size() == 5);
    CHECK(s.test_ids.size() == 95);
    std::set<int> train(s.train_ids.begin(), s.train_ids.end());
    for (int id : s.test_ids) CHECK(!train.count(id));

    Split s98 = split_glyphs(sd, 98, 3);
    CHECK(s98.train_ids.size() == 2);

    // m = 0: empty test marker, evaluation falls back to training shapes
    Split s0 = split_glyphs(sd, 0, 3);
    CHECK(s0.test_ids.empty());
    CHECK(s0.pool(true) == s0.train_ids);

    try {
        split_glyphs(sd, 99, 3);
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("k_min") != std::string::npos);
    }
    CHECK_THROWS_AS(split_glyphs(task_from_name("rmts"), 96, 3), Error);
    CHECK_THROWS_AS(split_glyphs(task_from_name("rmts3"), 95, 3), Error);
    CHECK_THROWS_AS(split_glyphs(task_from_name("dist10"), 90, 3), Error);

    Split a = split_glyphs(sd, 50, 9);
    Split b = split_glyphs(sd, 50, 9);
    CHECK(a.train_ids == b.train_ids);
    CHECK(a.test_ids == b.test_ids);
}

TEST_CASE("same/diff: identical glyphs label 'same'") {
    for (long i = 0; i < 32; ++i) {
        Episode ep = make("same_diff", 0, false, i);
        CHECK(ep.images.size() == 2);
        CHECK(ep.num_classes == 2);
        bool same = ep.meta.glyph_ids[0] == ep.meta.glyph_ids[1];
        CHECK(ep.label == (same ? 1 : 0));
        CHECK(oracle_label(ep) == ep.label);
    }
}

TEST_CASE("rmts: identical source and identical second target labels 'second'") {
    bool seen = false;
    for (long i = 0; i < 64 && !seen; ++i) {
        Episode ep = make("rmts", 0, false, i);
        const auto& g = ep.meta.glyph_ids;
        if (g[0] == g[1] && g[4] == g[5] && g[2] != g[3]) {
            CHECK(ep.label == 1);
            seen = true;
        }
        CHECK(oracle_label(ep) == ep.label);
    }
    CHECK(seen);
}

TEST_CASE("separated inputs: label tracks shapes, colors vary freely") {
    int color_mismatch_same = 0;
    for (long i = 0; i < 64; ++i) {
        Episode ep = make("separated_inputs", 0, false, i);
        CHECK(ep.images.size() == 4);
        CHECK(ep.meta.glyph_ids[1] == -1);
        CHECK(ep.meta.colors[1] >= 0);
        bool same = ep.meta.glyph_ids[0] == ep.meta.glyph_ids[2];
        CHECK(ep.label == (same ? 1 : 0));
        if (same && ep.meta.colors[1] != ep.meta.colors[3]) ++color_mismatch_same;
        CHECK(oracle_label(ep) == ep.label);
    }
    CHECK(color_mismatch_same > 0);  // "same" despite different colors
}

TEST_CASE("dist3: candidates are row-1 objects plus one novel distractor") {
    for (long i = 0; i < 48; ++i) {
        Episode ep = make("dist3", 0, false, i);
        const auto& g = ep.meta.glyph_ids;
        std::set<int> row1(g.begin(), g.begin() + 3);
        CHECK(row1.size() == 3);
        std::set<int> cands(g.begin() + 5, g.begin() + 9);
        CHECK(cands.size() == 4);
        int novel = 0;
        for (int c : cands) novel += row1.count(c) ? 0 : 1;
        CHECK(novel == 1);
        CHECK(oracle_label(ep) == ep.label);
        CHECK(ep.label == static_cast<int>(i % 4));  // exact position balance
    }
}

TEST_CASE("identity rules: unique pattern-completing candidate") {
    for (long i = 0; i < 48; ++i) {
        Episode ep = make("identity_rules", 0, false, i);
        const auto& g = ep.meta.glyph_ids;
        std::string p = canonical_pattern({g[0], g[1], g[2]});
        CHECK((p == "AAA" || p == "ABA" || p == "ABB"));
        int completions = 0;
        for (int c = 5; c < 9; ++c) {
            std::vector<int> row2 = {g[3], g[4], g[c]};
            if (canonical_pattern(row2) == p) ++completions;
        }
        CHECK(completions == 1);
        CHECK(oracle_label(ep) == ep.label);
    }
}

TEST_CASE("rmts3 holdout: train patterns {AAA,ABA,ABB}, test {ABC,AAB}") {
    for (long i = 0; i < 40; ++i) {
        Episode tr = make("rmts3", 94, false, i);
        Episode te = make("rmts3", 94, true, i);
        for (int base : {0, 3, 6}) {
            std::string pt = canonical_pattern(std::vector<int>(
                tr.meta.glyph_ids.begin() + base, tr.meta.glyph_ids.begin() + base + 3));
            CHECK((pt == "AAA" || pt == "ABA" || pt == "ABB"));
            std::string pe = canonical_pattern(std::vector<int>(
                te.meta.glyph_ids.begin() + base, te.meta.glyph_ids.begin() + base + 3));
            CHECK((pe == "ABC" || pe == "AAB"));
        }
        CHECK(oracle_label(tr) == tr.label);
        CHECK(oracle_label(te) == te.label);
    }
}

TEST_CASE("same_diff6: test episodes contain at least one AAB triplet") {
    for (long i = 0; i < 40; ++i) {
        Episode tr = make("same_diff6", 98, false, i);
        Episode te = make("same_diff6", 98, true, i);
        auto triplet = [](const Episode& e, int base) {
            return canonical_pattern(std::vector<int>(e.meta.glyph_ids.begin() + base,
                                                      e.meta.glyph_ids.begin() + base + 3));
        };
        for (int base : {0, 3}) {
            std::string p = triplet(tr, base);
            CHECK((p == "AAA" || p == "ABA" || p == "ABB"));
        }
        CHECK((triplet(te, 0) == "AAB" || triplet(te, 3) == "AAB"));
        CHECK(oracle_label(tr) == tr.label);
        CHECK(oracle_label(te) == te.label);
    }
}

TEST_CASE("identity_rules4 pattern sets per variant") {
    auto train_full = holdout_patterns(task_from_name("identity_rules4"), false);
    CHECK(train_full == std::vector<std::string>{"AAAA", "AABA", "ABAA", "AABB", "ABAB", "ABBA"});
    auto test_full = holdout_patterns(task_from_name("identity_rules4"), true);
    CHECK(test_full == std::vector<std::string>{"ABCA", "ABCB", "ABCC"});
    auto train_missing = holdout_patterns(task_from_name("identity_rules4_missing"), false);
    CHECK(train_missing == std::vector<std::string>{"AAAA", "AABA", "AABB", "ABBA"});
    auto train_flipped = holdout_patterns(task_from_name("identity_rules4_flipped"), false);
    CHECK(train_flipped == std::vector<std::string>{"ABCA", "ABCB", "ABCC"});
    auto train_fm = holdout_patterns(task_from_name("identity_rules4_flipped_missing"), false);
    CHECK(train_fm == std::vector<std::string>{"ABCB", "ABCC"});

    for (long i = 0; i < 24; ++i) {
        Episode tr = make("identity_rules4_missing", 94, false, i);
        CHECK(tr.images.size() == 13);
        CHECK((tr.meta.pattern != "ABAA" && tr.meta.pattern != "ABAB"));
        CHECK(oracle_label(tr) == tr.label);
        Episode te = make("identity_rules4_missing", 94, true, i);
        std::set<int> distinct(te.meta.glyph_ids.begin(), te.meta.glyph_ids.begin() + 4);
        CHECK(distinct.size() == 3);  // test quadruples have exactly three distinct objects
        CHECK(oracle_label(te) == te.label);
    }
}

TEST_CASE("dist10 restricted: train permutations preserve the head set") {
    TaskConfig cfg = task_from_name("dist10_restricted");
    Split split = split_glyphs(cfg, 89, 5);
    for (long i = 0; i < 12; ++i) {
        Episode tr = gen_episode(ctx(), cfg, split, false, 7, i);
        Episode te = gen_episode(ctx(), cfg, split, true, 7, i);
        CHECK(tr.images.size() == 30);
        auto head_preserved = [&](const Episode& e) {
            for (int k = 0; k < 7; ++k)
                if (e.meta.pattern[k] - '0' >= 7) return false;
            return true;
        };
        CHECK(head_preserved(tr));
        CHECK(!head_preserved(te));
        CHECK(oracle_label(tr) == tr.label);
        CHECK(oracle_label(te) == te.label);
    }
}

TEST_CASE("relational games: constructed examples") {
    TaskConfig between = task_from_name("game_between");
    Split none = split_glyphs(between, 0, 0);

    // 'between': collinear objects with equal ends labels true
    for (long i = 0; i < 24; ++i) {
        Episode ep = gen_episode(ctx(), between, none, false, 3, i);
        CHECK(ep.images.size() == 9);
        CHECK(oracle_label(ep) == ep.label);
        CHECK(ep.label == static_cast<int>(i & 1));
    }

    // 'match rows': ABA / ABA labels true
    TaskConfig rows = task_from_name("game_row_matching");
    for (long i = 0; i < 24; ++i) {
        Episode ep = gen_episode(ctx(), rows, none, false, 3, i);
        CHECK(oracle_label(ep) == ep.label);
        auto key = [&](int c) {
            return ep.meta.glyph_ids[c] * 1000 + ep.meta.colors[c] * 10 + ep.meta.orients[c] / 90;
        };
        std::string top = canonical_pattern({key(0), key(1), key(2)});
        std::string bot = canonical_pattern({key(6), key(7), key(8)});
        CHECK(((top == bot) == (ep.label == 1)));
    }

    // 'left-of': swapping the two objects flips the label
    TaskConfig leftof = task_from_name("game_left_of");
    for (long i = 0; i < 24; ++i) {
        Episode ep = gen_episode(ctx(), leftof, none, false, 3, i);
        CHECK(oracle_label(ep) == ep.label);
        std::vector<int> cells;
        for (int c = 0; c < 9; ++c)
            if (ep.meta.glyph_ids[c] >= 0) cells.push_back(c);
        REQUIRE(cells.size() == 2);
        Episode swapped = ep;
        std::swap(swapped.meta.glyph_ids[cells[0]], swapped.meta.glyph_ids[cells[1]]);
        std::swap(swapped.meta.colors[cells[0]], swapped.meta.colors[cells[1]]);
        std::swap(swapped.meta.orients[cells[0]], swapped.meta.orients[cells[1]]);
        CHECK(oracle_label(swapped) == 1 - ep.label);
    }

    // colour/shape has four balanced classes
    TaskConfig cs = task_from_name("game_colour_shape");
    std::map<int, int> counts;
    for (long i = 0; i < 40; ++i) {
        Episode ep = gen_episode(ctx(), cs, none, false, 3, i);
        CHECK(ep.num_classes == 4);
        CHECK(oracle_label(ep) == ep.label);
        counts[ep.label] += 1;
    }
    CHECK(counts.size() == 4);
    CHECK(counts[0] == 10);

    // test episodes draw the held-out families
    TaskConfig hex = between;
    hex.game_family = GlyphFamily::hexomino;
    Episode te = gen_episode(ctx(), hex, none, true, 3, 0);
    CHECK(oracle_label(te) == te.label);
    CHECK_THROWS_AS(gen_episode(ctx(), hex, none, false, 3, 0), Error);
    CHECK_THROWS_AS(gen_episode(ctx(), between, none, true, 3, 0), Error);
}

TEST_CASE("oracle flags inconsistent metadata") {
    Episode ep = make("rmts", 0, false, 0);
    // force both target pairs to match the source structure
    ep.meta.glyph_ids = {1, 1, 2, 2, 3, 3};
    CHECK_THROWS_AS(oracle_label(ep), Error);

    Episode sd = make("same_diff", 0, false, 1);
    Episode tampered = sd;
    tampered.meta.glyph_ids[0] = (tampered.meta.glyph_ids[0] + 1) % 100;
    CHECK_THROWS_AS(oracle_verify_images(ctx(), tampered), Error);
    oracle_verify_images(ctx(), sd);  // clean episode passes
}

TEST_CASE("episode generation is a pure function of (seed, index)") {
    for (const auto& name : {"same_diff", "rmts3", "dist3", "game_xoccurs", "same_diff_spurious"}) {
        TaskConfig cfg = task_from_name(name);
        Split split = split_glyphs(cfg, cfg.is_game() ? 0 : 50, 21);
        Episode a = gen_episode(ctx(), cfg, split, false, 99, 7);
        Episode b = gen_episode(ctx(), cfg, split, false, 99, 7);
        CHECK(a.label == b.label);
        CHECK(a.meta.glyph_ids == b.meta.glyph_ids);
        REQUIRE(a.images.size() == b.images.size());
        for (size_t t = 0; t < a.images.size(); ++t) CHECK(a.images[t].v == b.images[t].v);
        Episode c = gen_episode(ctx(), cfg, split, false, 99, 8);
        bool differs = c.label != a.label || c.meta.glyph_ids != a.meta.glyph_ids;
        for (size_t t = 0; t < a.images.size() && !differs; ++t)
            differs = c.images[t].v != a.images[t].v;
        CHECK(differs);
    }
}

TEST_CASE("binary labels balance within 0.02 over many episodes") {
    for (const auto& name : {"same_diff", "rmts", "same_diff6", "game_occurs"}) {
        TaskConfig cfg = task_from_name(name);
        Split split = split_glyphs(cfg, cfg.is_game() ? 0 : 50, 31);
        long ones = 0;
        const long n = 4000;
        for (long i = 0; i < n; ++i)
            ones += gen_episode(ctx(), cfg, split, false, 13, i).label;
        double frac = static_cast<double>(ones) / n;
        INFO(name, " P(label=1) = ", frac);
        CHECK(std::abs(frac - 0.5) < 0.02);
    }
}

TEST_CASE("spurious backgrounds are independent of the label") {
    TaskConfig cfg = task_from_name("same_diff_spurious");
    Split split = split_glyphs(cfg, 98, 3);
    std::map<std::pair<int, int>, long> joint;
    const long n = 10000;
    for (long i = 0; i < n; ++i) {
        Episode ep = gen_episode(ctx(), cfg, split, false, 17, i);
        CHECK(ep.meta.bg_colors[0] >= 0);
        joint[{ep.meta.bg_colors[0], ep.label}] += 1;
    }
    std::map<int, long> pc, pl;
    for (auto& [k, v] : joint) {
        pc[k.first] += v;
        pl[k.second] += v;
    }
    double mi = 0;
    for (auto& [k, v] : joint) {
        double pxy = static_cast<double>(v) / n;
        mi += pxy * std::log2(pxy / ((static_cast<double>(pc[k.first]) / n) *
                                     (static_cast<double>(pl[k.second]) / n)));
    }
    // Miller-Madow bias correction for the plug-in estimator
    mi -= static_cast<double>(pc.size() - 1) * static_cast<double>(pl.size() - 1) /
          (2.0 * n * std::log(2.0));
    INFO("MI = ", mi, " bits");
    CHECK(mi < 0.01);
}

TEST_CASE("split hygiene: test shapes never appear in training episodes") {
    TaskConfig cfg = task_from_name("rmts");
    Split split = split_glyphs(cfg, 95, 13);
    std::set<int> test_ids(split.test_ids.begin(), split.test_ids.end());
    std::set<int> train_ids(split.train_ids.begin(), split.train_ids.end());
    for (long i = 0; i < 500; ++i) {
        Episode tr = gen_episode(ctx(), cfg, split, false, 41, i);
        for (int g : tr.meta.glyph_ids) CHECK(!test_ids.count(g));
        Episode te = gen_episode(ctx(), cfg, split, true, 41, i);
        for (int g : te.meta.glyph_ids) CHECK(!train_ids.count(g));
    }
}

TEST_CASE("insufficient glyphs are rejected") {
    TaskConfig cfg = task_from_name("identity_rules4");
    Split split = split_glyphs(cfg, 94, 5);
    split.train_ids.resize(4);  // fewer than the 6 needed for rows + candidates
    CHECK_THROWS_AS(gen_episode(ctx(), cfg, split, false, 3, 0), Error);
}
