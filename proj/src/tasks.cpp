#include "corelnet/tasks.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <set>

namespace corelnet {

namespace {

struct KindName {
    TaskKind kind;
    const char* name;
};

constexpr KindName kKindNames[] = {
    {TaskKind::same_diff, "same_diff"},
    {TaskKind::rmts, "rmts"},
    {TaskKind::dist3, "dist3"},
    {TaskKind::identity_rules, "identity_rules"},
    {TaskKind::rmts3, "rmts3"},
    {TaskKind::same_diff6, "same_diff6"},
    {TaskKind::identity_rules4, "identity_rules4"},
    {TaskKind::dist_n, "dist"},
    {TaskKind::separated_inputs, "separated_inputs"},
    {TaskKind::game_same, "game_same"},
    {TaskKind::game_between, "game_between"},
    {TaskKind::game_occurs, "game_occurs"},
    {TaskKind::game_xoccurs, "game_xoccurs"},
    {TaskKind::game_row_matching, "game_row_matching"},
    {TaskKind::game_colour_shape, "game_colour_shape"},
    {TaskKind::game_left_of, "game_left_of"},
};

bool spurious_capable(TaskKind k) {
    return k == TaskKind::same_diff || k == TaskKind::rmts || k == TaskKind::dist3 ||
           k == TaskKind::identity_rules;
}

}  // namespace

std::string TaskConfig::name() const {
    std::string base;
    for (const auto& e : kKindNames)
        if (e.kind == kind) base = e.name;
    if (kind == TaskKind::dist_n) {
        base += std::to_string(n);
        if (restricted) base += "_restricted";
    }
    if (kind == TaskKind::identity_rules4) {
        switch (id4) {
            case Id4Variant::full: break;
            case Id4Variant::missing: base += "_missing"; break;
            case Id4Variant::flipped: base += "_flipped"; break;
            case Id4Variant::flipped_missing: base += "_flipped_missing"; break;
        }
    }
    if (spurious) base += "_spurious";
    return base;
}

TaskConfig task_from_name(const std::string& name) {
    std::string s = name;
    TaskConfig cfg;
    auto strip_suffix = [&](const std::string& suf) {
        if (s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0) {
            s.resize(s.size() - suf.size());
            return true;
        }
        return false;
    };
    cfg.spurious = strip_suffix("_spurious");
    if (s.rfind("dist", 0) == 0 && s != "dist3") {
        cfg.kind = TaskKind::dist_n;
        cfg.restricted = strip_suffix("_restricted");
        cfg.n = std::stoi(s.substr(4));
        require(cfg.n >= 4 && cfg.n <= 20, "dist-N supports N in [4,20], got ", cfg.n);
        require(!cfg.spurious, "task '", name, "' does not support spurious backgrounds");
        return cfg;
    }
    if (s.rfind("identity_rules4", 0) == 0) {
        cfg.kind = TaskKind::identity_rules4;
        std::string suffix = s.substr(std::string("identity_rules4").size());
        if (suffix == "") cfg.id4 = Id4Variant::full;
        else if (suffix == "_missing") cfg.id4 = Id4Variant::missing;
        else if (suffix == "_flipped") cfg.id4 = Id4Variant::flipped;
        else if (suffix == "_flipped_missing") cfg.id4 = Id4Variant::flipped_missing;
        else fail("unknown task '", name, "'");
        require(!cfg.spurious, "task '", name, "' does not support spurious backgrounds");
        return cfg;
    }
    for (const auto& e : kKindNames)
        if (s == e.name && e.kind != TaskKind::dist_n) {
            cfg.kind = e.kind;
            require(!cfg.spurious || spurious_capable(cfg.kind), "task '", name,
                    "' does not support spurious backgrounds");
            return cfg;
        }
    fail("unknown task '", name, "'");
}

std::vector<std::string> all_task_names() {
    return {
        "same_diff", "rmts", "dist3", "identity_rules",
        "same_diff_spurious", "rmts_spurious", "dist3_spurious", "identity_rules_spurious",
        "rmts3", "same_diff6",
        "identity_rules4", "identity_rules4_missing", "identity_rules4_flipped",
        "identity_rules4_flipped_missing",
        "dist10", "dist10_restricted", "separated_inputs",
        "game_same", "game_between", "game_occurs", "game_xoccurs",
        "game_row_matching", "game_colour_shape", "game_left_of",
    };
}

TaskInfo task_info(const TaskConfig& cfg) {
    TaskInfo info;
    switch (cfg.kind) {
        case TaskKind::same_diff:
            info = {2, 2, 2, 98, false};
            break;
        case TaskKind::rmts:
            info = {6, 2, 5, 95, false};
            break;
        case TaskKind::dist3:
            info = {9, 4, 5, 95, false};
            break;
        case TaskKind::identity_rules:
            info = {9, 4, 5, 95, false};
            break;
        case TaskKind::rmts3:
            info = {9, 2, 6, 94, true};
            break;
        case TaskKind::same_diff6:
            info = {6, 2, 2, 98, true};
            break;
        case TaskKind::identity_rules4:
            info = {13, 6, 6, 94, true};
            break;
        case TaskKind::dist_n:
            info = {3 * cfg.n, cfg.n + 1, cfg.n + 1, 100 - (cfg.n + 1), cfg.restricted};
            break;
        case TaskKind::separated_inputs:
            info = {4, 2, 2, 98, false};
            break;
        case TaskKind::game_colour_shape:
            info = {9, 4, 0, 0, false};
            break;
        default:  // remaining relational games are binary
            info = {9, 2, 0, 0, false};
            break;
    }
    return info;
}

TaskContext TaskContext::make(int image_size, uint64_t glyph_seed) {
    TaskContext ctx;
    ctx.cognitive = generate_glyph_set(GlyphFamily::cognitive, kShapeInventory, glyph_seed);
    ctx.pentominoes = generate_glyph_set(GlyphFamily::pentomino, 0, glyph_seed);
    ctx.hexominoes = generate_glyph_set(GlyphFamily::hexomino, 0, glyph_seed);
    ctx.stripes = generate_glyph_set(GlyphFamily::stripe, 35, glyph_seed);
    ctx.spurious_palette = hue_palette(100);
    ctx.image_size = image_size;
    return ctx;
}

const TaskContext& TaskContext::standard() {
    static const TaskContext ctx = make(32);
    return ctx;
}

const GlyphSet& TaskContext::game_set(GlyphFamily f) const {
    switch (f) {
        case GlyphFamily::pentomino: return pentominoes;
        case GlyphFamily::hexomino: return hexominoes;
        case GlyphFamily::stripe: return stripes;
        case GlyphFamily::cognitive: break;
    }
    fail("relational games use pentomino/hexomino/stripe families");
}

Split split_glyphs(const TaskConfig& cfg, int m, uint64_t seed) {
    TaskInfo info = task_info(cfg);
    Split split;
    split.m = m;
    split.seed = seed;
    if (cfg.is_game()) {
        require(m == 0, "relational games hold out shape families, not m shapes");
        return split;
    }
    require(m >= 0, "holdout count m must be >= 0, got ", m);
    require(m <= info.max_m, "m = ", m, " leaves fewer than k_min = ", info.k_min,
            " training shapes for task ", cfg.name(), " (max m = ", info.max_m, ")");
    Rng rng = Rng::from(seed, 0x5917, static_cast<uint64_t>(m));
    std::vector<int> ids(kShapeInventory);
    for (int i = 0; i < kShapeInventory; ++i) ids[i] = i;
    rng.shuffle(ids);
    split.test_ids.assign(ids.begin(), ids.begin() + m);
    split.train_ids.assign(ids.begin() + m, ids.end());
    std::sort(split.test_ids.begin(), split.test_ids.end());
    std::sort(split.train_ids.begin(), split.train_ids.end());
    return split;
}

std::string canonical_pattern(const std::vector<int>& ids) {
    std::string out;
    std::vector<int> seen;
    for (int id : ids) {
        auto it = std::find(seen.begin(), seen.end(), id);
        if (it == seen.end()) {
            seen.push_back(id);
            out.push_back(static_cast<char>('A' + seen.size() - 1));
        } else {
            out.push_back(static_cast<char>('A' + (it - seen.begin())));
        }
    }
    return out;
}

std::vector<std::string> holdout_patterns(const TaskConfig& cfg, bool test_side) {
    switch (cfg.kind) {
        case TaskKind::rmts3:
            return test_side ? std::vector<std::string>{"ABC", "AAB"}
                             : std::vector<std::string>{"AAA", "ABA", "ABB"};
        case TaskKind::same_diff6:
            // test episodes must additionally contain at least one AAB triplet
            return test_side ? std::vector<std::string>{"AAA", "AAB", "ABA", "ABB"}
                             : std::vector<std::string>{"AAA", "ABA", "ABB"};
        case TaskKind::identity_rules4: {
            // quadruple structures with a unique last-slot completion
            std::vector<std::string> two = {"AAAA", "AABA", "ABAA", "AABB", "ABAB", "ABBA"};
            std::vector<std::string> three = {"ABCA", "ABCB", "ABCC"};
            bool flipped =
                cfg.id4 == Id4Variant::flipped || cfg.id4 == Id4Variant::flipped_missing;
            std::vector<std::string> train = flipped ? three : two;
            std::vector<std::string> test = flipped ? two : three;
            if (cfg.id4 == Id4Variant::missing) {
                std::erase(train, "ABAA");
                std::erase(train, "ABAB");
            }
            if (cfg.id4 == Id4Variant::flipped_missing) std::erase(train, "ABCA");
            return test_side ? test : train;
        }
        default:
            return {};
    }
}

// ---------------------------------------------------------------------------
// Generation helpers
// ---------------------------------------------------------------------------

namespace {

const Rgb kWhite{255, 255, 255};
const Rgb kBlack{0, 0, 0};

// Map a pattern's letters to distinct glyph ids from the pool, excluding ids
// already used by `exclude`.
std::vector<int> instantiate_pattern(const std::string& pattern, const std::vector<int>& pool,
                                     Rng& rng, const std::vector<int>& exclude = {}) {
    int letters = 0;
    for (char c : pattern) letters = std::max(letters, c - 'A' + 1);
    std::vector<int> avail;
    for (int id : pool)
        if (std::find(exclude.begin(), exclude.end(), id) == exclude.end()) avail.push_back(id);
    require(static_cast<int>(avail.size()) >= letters,
            "insufficient distinct glyphs for pattern ", pattern, ": need ", letters, ", have ",
            avail.size());
    std::vector<int> picks = rng.sample_distinct(static_cast<int>(avail.size()), letters);
    std::vector<int> out;
    out.reserve(pattern.size());
    for (char c : pattern) out.push_back(avail[picks[c - 'A']]);
    return out;
}

int pick_from(const std::vector<int>& pool, Rng& rng) {
    return pool[rng.randint(static_cast<long>(pool.size()))];
}

int pick_other(const std::vector<int>& pool, Rng& rng, int not_this) {
    require(pool.size() >= 2, "insufficient distinct glyphs: need 2, have ", pool.size());
    for (;;) {
        int id = pick_from(pool, rng);
        if (id != not_this) return id;
    }
}

std::string pick_pattern(const std::vector<std::string>& set, Rng& rng) {
    require(!set.empty(), "pattern whitelist leaves zero admissible patterns");
    return set[rng.randint(static_cast<long>(set.size()))];
}

struct Builder {
    const TaskContext& ctx;
    const TaskConfig& cfg;
    Episode ep;

    Builder(const TaskContext& c, const TaskConfig& f, int T, int classes) : ctx(c), cfg(f) {
        ep.num_classes = classes;
        ep.meta.task = f.name();
        ep.meta.glyph_ids.assign(T, -1);
        ep.meta.colors.assign(T, -1);
        ep.meta.orients.assign(T, 0);
        ep.meta.bg_colors.assign(T, -1);
        ep.images.reserve(T);
    }

    // cognitive object frame (white glyph, optional spurious background)
    void add_shape(int slot, int glyph_id, Rng& rng) {
        ep.meta.glyph_ids[slot] = glyph_id;
        RenderSpec spec;
        spec.canvas = ctx.image_size;
        spec.fg = kWhite;
        if (cfg.spurious) {
            int bg = static_cast<int>(rng.randint(static_cast<long>(ctx.spurious_palette.size())));
            ep.meta.bg_colors[slot] = bg;
            spec.bg = ctx.spurious_palette[bg];
        }
        ep.images.push_back(render_object(ctx.cognitive.at(glyph_id), spec));
    }

    void add_color_frame(int slot, int color) {
        ep.meta.colors[slot] = color;
        ep.images.push_back(render_solid(ctx.image_size, ctx.spurious_palette[color]));
    }
};

// Relational-games object: full attribute triple.
struct GameObj {
    int shape = -1, color = -1, orient = 0;
    bool operator==(const GameObj&) const = default;
};

struct GameGrid {
    std::array<std::optional<GameObj>, 9> cells;
};

GameObj sample_obj(const GlyphSet& set, Rng& rng) {
    GameObj o;
    o.shape = static_cast<int>(rng.randint(set.count()));
    o.color = static_cast<int>(rng.randint(8));
    auto ors = distinct_orientations(set.at(o.shape));
    o.orient = ors[rng.randint(static_cast<long>(ors.size()))];
    return o;
}

GameObj sample_other_obj(const GlyphSet& set, Rng& rng, const GameObj& not_this) {
    for (;;) {
        GameObj o = sample_obj(set, rng);
        if (!(o == not_this)) return o;
    }
}

const std::array<std::array<int, 3>, 8> kLines = {{
    {0, 1, 2}, {3, 4, 5}, {6, 7, 8},  // rows
    {0, 3, 6}, {1, 4, 7}, {2, 5, 8},  // columns
    {0, 4, 8}, {2, 4, 6},             // diagonals
}};

const std::vector<std::string> kTripletPatterns = {"AAA", "AAB", "ABA", "ABB", "ABC"};

Episode finish_game(const TaskContext& ctx, const TaskConfig& cfg, const GameGrid& grid,
                    int label, const std::string& pattern, bool test_side) {
    const GlyphSet& set = ctx.game_set(cfg.game_family);
    TaskInfo info = task_info(cfg);
    Builder b(ctx, cfg, 9, info.num_classes);
    for (int c = 0; c < 9; ++c) {
        if (grid.cells[c]) {
            const GameObj& o = *grid.cells[c];
            b.ep.meta.glyph_ids[c] = o.shape;
            b.ep.meta.colors[c] = o.color;
            b.ep.meta.orients[c] = o.orient;
            RenderSpec spec;
            spec.canvas = 12;
            spec.fg = games_palette()[o.color];
            spec.orientation = o.orient;
            b.ep.images.push_back(render_object(set.at(o.shape), spec));
        } else {
            b.ep.images.push_back(render_solid(12, kBlack));
        }
    }
    b.ep.label = label;
    b.ep.meta.pattern = pattern;
    b.ep.meta.answer_pos = label;
    b.ep.meta.test_side = test_side;
    b.ep.meta.family = family_name(cfg.game_family);
    return b.ep;
}

Episode gen_pair_like(const TaskContext& ctx, const TaskConfig& cfg, const Split& split,
                      bool test_side, Rng& rng, long index) {
    const std::vector<int>& pool = split.pool(test_side);
    TaskInfo info = task_info(cfg);
    Builder b(ctx, cfg, info.seq_len, info.num_classes);

    switch (cfg.kind) {
        case TaskKind::same_diff: {
            bool same = (index & 1) != 0;  // class 1 = "same"
            int a = pick_from(pool, rng);
            int c = same ? a : pick_other(pool, rng, a);
            b.add_shape(0, a, rng);
            b.add_shape(1, c, rng);
            b.ep.label = same ? 1 : 0;
            b.ep.meta.pattern = same ? "AA" : "AB";
            break;
        }
        case TaskKind::separated_inputs: {
            bool same = (index & 1) != 0;
            int a = pick_from(pool, rng);
            int c = same ? a : pick_other(pool, rng, a);
            b.add_shape(0, a, rng);
            b.add_color_frame(1, static_cast<int>(rng.randint(100)));
            b.add_shape(2, c, rng);
            b.add_color_frame(3, static_cast<int>(rng.randint(100)));
            b.ep.label = same ? 1 : 0;
            b.ep.meta.pattern = same ? "AA" : "AB";
            break;
        }
        case TaskKind::rmts: {
            bool source_same = (index & 1) != 0;
            int answer = static_cast<int>((index >> 1) & 1);  // label = matching target pair
            auto gen_pair = [&](bool same) {
                int x = pick_from(pool, rng);
                int y = same ? x : pick_other(pool, rng, x);
                return std::pair<int, int>{x, y};
            };
            auto src = gen_pair(source_same);
            auto match = gen_pair(source_same);
            auto nomatch = gen_pair(!source_same);
            b.add_shape(0, src.first, rng);
            b.add_shape(1, src.second, rng);
            auto t0 = answer == 0 ? match : nomatch;
            auto t1 = answer == 0 ? nomatch : match;
            b.add_shape(2, t0.first, rng);
            b.add_shape(3, t0.second, rng);
            b.add_shape(4, t1.first, rng);
            b.add_shape(5, t1.second, rng);
            b.ep.label = answer;
            b.ep.meta.answer_pos = answer;
            b.ep.meta.pattern = source_same ? "AA" : "AB";
            break;
        }
        case TaskKind::rmts3: {
            int answer = static_cast<int>(index & 1);
            auto patterns = holdout_patterns(cfg, test_side);
            std::string src_p = pick_pattern(patterns, rng);
            std::string nomatch_p;
            do {
                nomatch_p = pick_pattern(patterns, rng);
            } while (nomatch_p == src_p);
            std::vector<int> src = instantiate_pattern(src_p, pool, rng);
            std::vector<int> match = instantiate_pattern(src_p, pool, rng);
            std::vector<int> nomatch = instantiate_pattern(nomatch_p, pool, rng);
            const auto& t0 = answer == 0 ? match : nomatch;
            const auto& t1 = answer == 0 ? nomatch : match;
            for (int i = 0; i < 3; ++i) b.add_shape(i, src[i], rng);
            for (int i = 0; i < 3; ++i) b.add_shape(3 + i, t0[i], rng);
            for (int i = 0; i < 3; ++i) b.add_shape(6 + i, t1[i], rng);
            b.ep.label = answer;
            b.ep.meta.answer_pos = answer;
            b.ep.meta.pattern =
                src_p + "|" + canonical_pattern(t0) + "|" + canonical_pattern(t1);
            break;
        }
        case TaskKind::same_diff6: {
            bool same = (index & 1) != 0;
            auto patterns = holdout_patterns(cfg, test_side);
            std::vector<int> t0, t1;
            std::string p0, p1;
            if (same) {
                p0 = test_side ? "AAB" : pick_pattern(patterns, rng);
                t0 = instantiate_pattern(p0, pool, rng);
                t1 = t0;
            } else {
                p0 = test_side && rng.coin() ? "AAB" : pick_pattern(patterns, rng);
                p1 = (test_side && p0 != "AAB") ? "AAB" : pick_pattern(patterns, rng);
                t0 = instantiate_pattern(p0, pool, rng);
                do {
                    t1 = instantiate_pattern(p1, pool, rng);
                } while (t1 == t0);
            }
            for (int i = 0; i < 3; ++i) b.add_shape(i, t0[i], rng);
            for (int i = 0; i < 3; ++i) b.add_shape(3 + i, t1[i], rng);
            b.ep.label = same ? 1 : 0;
            b.ep.meta.pattern = canonical_pattern(t0) + "|" + canonical_pattern(t1);
            break;
        }
        default:
            fail("gen_pair_like does not handle task ", cfg.name());
    }
    b.ep.meta.test_side = test_side;
    return b.ep;
}

Episode gen_row_like(const TaskContext& ctx, const TaskConfig& cfg, const Split& split,
                     bool test_side, Rng& rng, long index) {
    const std::vector<int>& pool = split.pool(test_side);
    TaskInfo info = task_info(cfg);
    Builder b(ctx, cfg, info.seq_len, info.num_classes);
    int slot = 0;

    if (cfg.kind == TaskKind::dist3 || cfg.kind == TaskKind::dist_n) {
        int N = cfg.kind == TaskKind::dist3 ? 3 : cfg.n;
        require(static_cast<int>(pool.size()) >= N + 1, "insufficient distinct glyphs: need ",
                N + 1, ", have ", pool.size());
        std::vector<int> picks = rng.sample_distinct(static_cast<int>(pool.size()), N + 1);
        std::vector<int> row1(N);
        for (int i = 0; i < N; ++i) row1[i] = pool[picks[i]];
        int distractor = pool[picks[N]];

        // permutation sending row 1 to row 2
        std::vector<int> perm(N);
        for (int i = 0; i < N; ++i) perm[i] = i;
        if (cfg.kind == TaskKind::dist_n && cfg.restricted) {
            if (!test_side) {
                // preserve the set of the first N-3 elements
                std::vector<int> head(perm.begin(), perm.begin() + (N - 3));
                std::vector<int> tail(perm.begin() + (N - 3), perm.end());
                rng.shuffle(head);
                rng.shuffle(tail);
                std::copy(head.begin(), head.end(), perm.begin());
                std::copy(tail.begin(), tail.end(), perm.begin() + (N - 3));
            } else {
                auto preserves_head = [&](const std::vector<int>& p) {
                    for (int i = 0; i < N - 3; ++i)
                        if (p[i] >= N - 3) return false;
                    return true;
                };
                do {
                    rng.shuffle(perm);
                } while (preserves_head(perm));
            }
        } else {
            rng.shuffle(perm);
        }

        int missing = row1[perm[N - 1]];
        int answer = static_cast<int>(index % (N + 1));
        std::vector<int> candidates(N + 1, -1);
        candidates[answer] = missing;
        std::vector<int> rest;
        for (int i = 0; i < N; ++i)
            if (row1[i] != missing) rest.push_back(row1[i]);
        rest.push_back(distractor);
        rng.shuffle(rest);
        for (int i = 0, j = 0; i < N + 1; ++i)
            if (candidates[i] < 0) candidates[i] = rest[j++];

        for (int i = 0; i < N; ++i) b.add_shape(slot++, row1[i], rng);
        for (int i = 0; i < N - 1; ++i) b.add_shape(slot++, row1[perm[i]], rng);
        for (int i = 0; i < N + 1; ++i) b.add_shape(slot++, candidates[i], rng);
        b.ep.label = answer;
        b.ep.meta.answer_pos = answer;
        std::string p;
        for (int i = 0; i < N; ++i) p += static_cast<char>('0' + perm[i]);
        b.ep.meta.pattern = p;
    } else {
        // identity rules (rows of 3, 4 candidates) and identity rules 4 (rows
        // of 4, 6 candidates); the masked last slot of row 2 is omitted
        bool is4 = cfg.kind == TaskKind::identity_rules4;
        int row_len = is4 ? 4 : 3;
        int n_cands = is4 ? 6 : 4;
        std::vector<std::string> patterns = is4 ? holdout_patterns(cfg, test_side)
                                                : std::vector<std::string>{"AAA", "ABA", "ABB"};
        std::string p = pick_pattern(patterns, rng);
        std::vector<int> row1 = instantiate_pattern(p, pool, rng);
        std::vector<int> row2 = instantiate_pattern(p, pool, rng, row1);
        int correct = row2[row_len - 1];

        int answer = static_cast<int>(index % n_cands);
        std::vector<int> cands(n_cands, -1);
        cands[answer] = correct;
        std::vector<int> avail;
        for (int id : pool)
            if (id != correct) avail.push_back(id);
        require(static_cast<int>(avail.size()) >= n_cands - 1,
                "insufficient distinct glyphs for ", n_cands, " candidates");
        std::vector<int> picks = rng.sample_distinct(static_cast<int>(avail.size()), n_cands - 1);
        for (int i = 0, j = 0; i < n_cands; ++i)
            if (cands[i] < 0) cands[i] = avail[picks[j++]];

        for (int i = 0; i < row_len; ++i) b.add_shape(slot++, row1[i], rng);
        for (int i = 0; i < row_len - 1; ++i) b.add_shape(slot++, row2[i], rng);
        for (int i = 0; i < n_cands; ++i) b.add_shape(slot++, cands[i], rng);
        b.ep.label = answer;
        b.ep.meta.answer_pos = answer;
        b.ep.meta.pattern = p;
    }
    b.ep.meta.test_side = test_side;
    return b.ep;
}

Episode gen_game(const TaskContext& ctx, const TaskConfig& cfg, bool test_side, Rng& rng,
                 long index) {
    const GlyphSet& set = ctx.game_set(cfg.game_family);
    GameGrid grid;
    int label = 0;
    std::string pattern;

    switch (cfg.kind) {
        case TaskKind::game_same: {
            bool same = (index & 1) != 0;
            auto cells = rng.sample_distinct(9, 2);
            GameObj a = sample_obj(set, rng);
            GameObj c = same ? a : sample_other_obj(set, rng, a);
            grid.cells[cells[0]] = a;
            grid.cells[cells[1]] = c;
            label = same ? 1 : 0;
            pattern = same ? "AA" : "AB";
            break;
        }
        case TaskKind::game_between: {
            bool truth = (index & 1) != 0;
            const auto& line = kLines[rng.randint(8)];
            GameObj outer = sample_obj(set, rng);
            GameObj other = truth ? outer : sample_other_obj(set, rng, outer);
            grid.cells[line[0]] = outer;
            grid.cells[line[1]] = sample_obj(set, rng);
            grid.cells[line[2]] = other;
            label = truth ? 1 : 0;
            break;
        }
        case TaskKind::game_occurs:
        case TaskKind::game_xoccurs: {
            bool truth = (index & 1) != 0;
            GameObj top = sample_obj(set, rng);
            grid.cells[rng.randint(3)] = top;
            std::array<GameObj, 3> bottom;
            if (cfg.kind == TaskKind::game_occurs) {
                if (truth) {
                    long match_slot = rng.randint(3);
                    for (int i = 0; i < 3; ++i)
                        bottom[i] = i == match_slot ? top : sample_obj(set, rng);
                } else {
                    for (int i = 0; i < 3; ++i) bottom[i] = sample_other_obj(set, rng, top);
                }
            } else {
                // xoccurs: exactly one match and the two remaining objects differ
                if (truth) {
                    long match_slot = rng.randint(3);
                    GameObj o1 = sample_other_obj(set, rng, top);
                    GameObj o2;
                    do {
                        o2 = sample_other_obj(set, rng, top);
                    } while (o2 == o1);
                    int j = 0;
                    for (int i = 0; i < 3; ++i)
                        bottom[i] = i == match_slot ? top : (j++ == 0 ? o1 : o2);
                } else {
                    double mode = rng.uniform();
                    if (mode < 0.5) {
                        // no match at all
                        for (int i = 0; i < 3; ++i) bottom[i] = sample_other_obj(set, rng, top);
                    } else if (mode < 0.75) {
                        // one match but the other two are identical
                        long match_slot = rng.randint(3);
                        GameObj o = sample_other_obj(set, rng, top);
                        for (int i = 0; i < 3; ++i) bottom[i] = i == match_slot ? top : o;
                    } else {
                        // two or three matches
                        int extra = rng.coin() ? 3 : 2;
                        std::vector<int> slots = rng.sample_distinct(3, extra);
                        for (int i = 0; i < 3; ++i) bottom[i] = sample_obj(set, rng);
                        for (int s : slots) bottom[s] = top;
                    }
                }
            }
            for (int i = 0; i < 3; ++i) grid.cells[6 + i] = bottom[i];
            label = truth ? 1 : 0;
            break;
        }
        case TaskKind::game_row_matching: {
            bool truth = (index & 1) != 0;
            std::string p_top = pick_pattern(kTripletPatterns, rng);
            std::string p_bot = p_top;
            if (!truth)
                do {
                    p_bot = pick_pattern(kTripletPatterns, rng);
                } while (p_bot == p_top);
            auto fill_row = [&](const std::string& p, int base) {
                int letters = 0;
                for (char ch : p) letters = std::max(letters, ch - 'A' + 1);
                std::vector<GameObj> objs;
                for (int i = 0; i < letters; ++i) {
                    GameObj o = sample_obj(set, rng);
                    while (std::find(objs.begin(), objs.end(), o) != objs.end())
                        o = sample_obj(set, rng);
                    objs.push_back(o);
                }
                for (int i = 0; i < 3; ++i) grid.cells[base + i] = objs[p[i] - 'A'];
            };
            fill_row(p_top, 0);
            fill_row(p_bot, 6);
            label = truth ? 1 : 0;
            pattern = p_top + "|" + p_bot;
            break;
        }
        case TaskKind::game_colour_shape: {
            // classes: 0 same-same, 1 same-different, 2 different-same,
            // 3 different-different (colour, then shape)
            int cls = static_cast<int>(index % 4);
            bool colour_same = cls == 0 || cls == 1;
            bool shape_same = cls == 0 || cls == 2;
            auto cells = rng.sample_distinct(9, 2);
            GameObj a;
            a.shape = static_cast<int>(rng.randint(set.count()));
            a.color = static_cast<int>(rng.randint(8));
            a.orient = 0;
            GameObj c;
            c.shape = shape_same ? a.shape
                                 : static_cast<int>((a.shape + 1 + rng.randint(set.count() - 1)) %
                                                    set.count());
            c.color =
                colour_same ? a.color : static_cast<int>((a.color + 1 + rng.randint(7)) % 8);
            c.orient = 0;
            grid.cells[cells[0]] = a;
            grid.cells[cells[1]] = c;
            label = cls;
            break;
        }
        case TaskKind::game_left_of: {
            bool truth = (index & 1) != 0;
            int col_a = static_cast<int>(rng.randint(3));
            int col_b = static_cast<int>((col_a + 1 + rng.randint(2)) % 3);
            int cell_a = static_cast<int>(rng.randint(3)) * 3 + col_a;
            int cell_b = static_cast<int>(rng.randint(3)) * 3 + col_b;
            GameObj a = sample_obj(set, rng);
            GameObj c = sample_obj(set, rng);
            while (c.color == a.color) c = sample_obj(set, rng);
            // make a the lower-luminance object
            if (luminance(games_palette()[a.color]) > luminance(games_palette()[c.color]))
                std::swap(a, c);
            bool a_left = (cell_a % 3) < (cell_b % 3);
            if (a_left != truth) std::swap(cell_a, cell_b);
            grid.cells[cell_a] = a;
            grid.cells[cell_b] = c;
            label = truth ? 1 : 0;
            break;
        }
        default:
            fail("not a relational game: ", cfg.name());
    }
    return finish_game(ctx, cfg, grid, label, pattern, test_side);
}

}  // namespace

Episode gen_episode(const TaskContext& ctx, const TaskConfig& cfg, const Split& split,
                    bool test_side, uint64_t stream, long index) {
    Rng rng = Rng::from(stream, 0xE915 + static_cast<uint64_t>(cfg.kind), test_side ? 1 : 0,
                        static_cast<uint64_t>(index));
    if (cfg.is_game()) {
        require(test_side ? cfg.game_family != GlyphFamily::pentomino
                          : cfg.game_family == GlyphFamily::pentomino,
                "relational games train on pentominoes and test on hexominoes/stripes; got ",
                family_name(cfg.game_family), " for the ", test_side ? "test" : "training",
                " side");
        return gen_game(ctx, cfg, test_side, rng, index);
    }
    require(!split.train_ids.empty(), "split has no training shapes; call split_glyphs first");
    if (test_side && split.test_ids.empty())
        test_side = false;  // m = 0: in-distribution evaluation on training shapes

    switch (cfg.kind) {
        case TaskKind::same_diff:
        case TaskKind::separated_inputs:
        case TaskKind::rmts:
        case TaskKind::rmts3:
        case TaskKind::same_diff6:
            return gen_pair_like(ctx, cfg, split, test_side, rng, index);
        default:
            return gen_row_like(ctx, cfg, split, test_side, rng, index);
    }
}

std::vector<Episode> gen_episodes(const TaskContext& ctx, const TaskConfig& cfg,
                                  const Split& split, bool test_side, uint64_t stream,
                                  long first_index, int count) {
    std::vector<Episode> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i)
        out.push_back(gen_episode(ctx, cfg, split, test_side, stream, first_index + i));
    return out;
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

namespace {

std::vector<int> slice(const std::vector<int>& v, int from, int len) {
    return std::vector<int>(v.begin() + from, v.begin() + from + len);
}

int unique_index(const std::vector<int>& hits, const char* what) {
    require(hits.size() == 1, "metadata inconsistent: expected exactly one ", what, ", found ",
            hits.size());
    return hits[0];
}

// composite identity for relational-games objects
long game_key(const EpisodeMeta& m, int cell) {
    return (static_cast<long>(m.glyph_ids[cell]) << 16) |
           (static_cast<long>(m.colors[cell]) << 8) | (m.orients[cell] / 90);
}

std::vector<int> occupied_cells(const EpisodeMeta& m) {
    std::vector<int> out;
    for (int c = 0; c < static_cast<int>(m.glyph_ids.size()); ++c)
        if (m.glyph_ids[c] >= 0) out.push_back(c);
    return out;
}

int oracle_game(const TaskConfig& cfg, const Episode& ep) {
    const EpisodeMeta& m = ep.meta;
    auto cells = occupied_cells(m);
    switch (cfg.kind) {
        case TaskKind::game_same: {
            require(cells.size() == 2, "metadata inconsistent: 'same' needs 2 objects, found ",
                    cells.size());
            return game_key(m, cells[0]) == game_key(m, cells[1]) ? 1 : 0;
        }
        case TaskKind::game_between: {
            require(cells.size() == 3, "metadata inconsistent: 'between' needs 3 objects");
            for (const auto& line : kLines) {
                if (std::set<int>(line.begin(), line.end()) ==
                    std::set<int>(cells.begin(), cells.end()))
                    return game_key(m, line[0]) == game_key(m, line[2]) ? 1 : 0;
            }
            fail("metadata inconsistent: 'between' objects are not collinear");
        }
        case TaskKind::game_occurs:
        case TaskKind::game_xoccurs: {
            std::vector<int> top, bottom;
            for (int c : cells) (c < 3 ? top : bottom).push_back(c);
            require(top.size() == 1 && bottom.size() == 3,
                    "metadata inconsistent: occurs needs 1 top and 3 bottom objects");
            long tk = game_key(m, top[0]);
            std::vector<long> bk;
            for (int c : bottom) bk.push_back(game_key(m, c));
            int matches = 0;
            for (long k : bk) matches += k == tk ? 1 : 0;
            if (cfg.kind == TaskKind::game_occurs) return matches >= 1 ? 1 : 0;
            if (matches != 1) return 0;
            std::vector<long> rest;
            for (long k : bk)
                if (k != tk) rest.push_back(k);
            return (rest.size() == 2 && rest[0] != rest[1]) ? 1 : 0;
        }
        case TaskKind::game_row_matching: {
            std::vector<int> top_keys, bot_keys;
            for (int c = 0; c < 3; ++c) top_keys.push_back(static_cast<int>(game_key(m, c)));
            for (int c = 6; c < 9; ++c) bot_keys.push_back(static_cast<int>(game_key(m, c)));
            return canonical_pattern(top_keys) == canonical_pattern(bot_keys) ? 1 : 0;
        }
        case TaskKind::game_colour_shape: {
            require(cells.size() == 2, "metadata inconsistent: colour/shape needs 2 objects");
            bool colour_same = m.colors[cells[0]] == m.colors[cells[1]];
            bool shape_same = m.glyph_ids[cells[0]] == m.glyph_ids[cells[1]];
            return (colour_same ? 0 : 2) + (shape_same ? 0 : 1);
        }
        case TaskKind::game_left_of: {
            require(cells.size() == 2, "metadata inconsistent: left-of needs 2 objects");
            double l0 = luminance(games_palette()[m.colors[cells[0]]]);
            double l1 = luminance(games_palette()[m.colors[cells[1]]]);
            require(l0 != l1, "metadata inconsistent: left-of objects share a luminance");
            int dark_cell = l0 < l1 ? cells[0] : cells[1];
            int light_cell = l0 < l1 ? cells[1] : cells[0];
            require(dark_cell % 3 != light_cell % 3,
                    "metadata inconsistent: left-of objects share a column");
            return (dark_cell % 3) < (light_cell % 3) ? 1 : 0;
        }
        default:
            fail("not a relational game");
    }
}

}  // namespace

int oracle_label(const Episode& ep) {
    const EpisodeMeta& m = ep.meta;
    require(!m.glyph_ids.empty(), "episode metadata is missing");
    TaskConfig cfg = task_from_name(m.task);
    if (cfg.is_game()) return oracle_game(cfg, ep);

    const std::vector<int>& g = m.glyph_ids;
    switch (cfg.kind) {
        case TaskKind::same_diff:
            return g[0] == g[1] ? 1 : 0;
        case TaskKind::separated_inputs:
            return g[0] == g[2] ? 1 : 0;  // colors carry no label information
        case TaskKind::rmts: {
            bool src = g[0] == g[1];
            std::vector<int> hits;
            if ((g[2] == g[3]) == src) hits.push_back(0);
            if ((g[4] == g[5]) == src) hits.push_back(1);
            return unique_index(hits, "matching target pair");
        }
        case TaskKind::rmts3: {
            std::string src = canonical_pattern(slice(g, 0, 3));
            std::vector<int> hits;
            if (canonical_pattern(slice(g, 3, 3)) == src) hits.push_back(0);
            if (canonical_pattern(slice(g, 6, 3)) == src) hits.push_back(1);
            return unique_index(hits, "matching target triplet");
        }
        case TaskKind::same_diff6:
            return slice(g, 0, 3) == slice(g, 3, 3) ? 1 : 0;
        case TaskKind::dist3:
        case TaskKind::dist_n: {
            int N = cfg.kind == TaskKind::dist3 ? 3 : cfg.n;
            std::vector<int> row1 = slice(g, 0, N);
            std::vector<int> visible = slice(g, N, N - 1);
            std::vector<int> cands = slice(g, 2 * N - 1, N + 1);
            std::vector<int> missing_hits;
            for (int x : row1)
                if (std::find(visible.begin(), visible.end(), x) == visible.end())
                    missing_hits.push_back(x);
            require(missing_hits.size() == 1,
                    "metadata inconsistent: second row is not a permutation prefix");
            std::vector<int> hits;
            for (int i = 0; i < N + 1; ++i)
                if (cands[i] == missing_hits[0]) hits.push_back(i);
            return unique_index(hits, "candidate equal to the missing object");
        }
        case TaskKind::identity_rules:
        case TaskKind::identity_rules4: {
            int L = cfg.kind == TaskKind::identity_rules ? 3 : 4;
            int C = cfg.kind == TaskKind::identity_rules ? 4 : 6;
            std::vector<int> row1 = slice(g, 0, L);
            std::vector<int> row2 = slice(g, L, L - 1);
            std::vector<int> cands = slice(g, 2 * L - 1, C);
            std::string target = canonical_pattern(row1);
            std::vector<int> hits;
            for (int i = 0; i < C; ++i) {
                std::vector<int> full = row2;
                full.push_back(cands[i]);
                if (canonical_pattern(full) == target) hits.push_back(i);
            }
            return unique_index(hits, "pattern-completing candidate");
        }
        default:
            fail("oracle does not handle task ", m.task);
    }
}

void oracle_verify_images(const TaskContext& ctx, const Episode& ep) {
    TaskConfig cfg = task_from_name(ep.meta.task);
    const EpisodeMeta& m = ep.meta;
    require(ep.images.size() == m.glyph_ids.size(), "image count ", ep.images.size(),
            " does not match metadata length ", m.glyph_ids.size());
    for (size_t t = 0; t < ep.images.size(); ++t) {
        Array<float> expect;
        if (cfg.is_game()) {
            if (m.glyph_ids[t] < 0) {
                expect = render_solid(12, kBlack);
            } else {
                RenderSpec spec;
                spec.canvas = 12;
                spec.fg = games_palette()[m.colors[t]];
                spec.orientation = m.orients[t];
                GlyphFamily fam = m.family.empty() ? cfg.game_family : family_from_name(m.family);
                expect = render_object(ctx.game_set(fam).at(m.glyph_ids[t]), spec);
            }
        } else if (m.glyph_ids[t] < 0) {
            require(m.colors[t] >= 0, "metadata inconsistent: empty slot in a cognitive task");
            expect = render_solid(ctx.image_size, ctx.spurious_palette[m.colors[t]]);
        } else {
            RenderSpec spec;
            spec.canvas = ctx.image_size;
            spec.fg = kWhite;
            if (m.bg_colors[t] >= 0) spec.bg = ctx.spurious_palette[m.bg_colors[t]];
            expect = render_object(ctx.cognitive.at(m.glyph_ids[t]), spec);
        }
        require(expect.v == ep.images[t].v, "image ", t, " of task ", m.task,
                " does not match its metadata render");
    }
}

}  // namespace corelnet
