#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <string>

#include "corelnet/glyphs.hpp"

using namespace corelnet;

namespace {

// Independent enumeration oracle: test every k-subset of a k x k grid for
// connectivity, canonicalize under the 8 symmetries, count distinct shapes.
// Deliberately brute-force and unrelated to the growth algorithm under test.
struct BruteCells {
    std::vector<std::pair<int, int>> cells;
};

std::string brute_key(std::vector<std::pair<int, int>> cells) {
    int mr = 99, mc = 99, xr = -1, xc = -1;
    for (auto [r, c] : cells) {
        mr = std::min(mr, r);
        mc = std::min(mc, c);
    }
    for (auto& [r, c] : cells) {
        r -= mr;
        c -= mc;
        xr = std::max(xr, r);
        xc = std::max(xc, c);
    }
    std::string key(static_cast<size_t>((xr + 1)) * (xc + 1), '0');
    key.insert(key.begin(), static_cast<char>('0' + xc + 1));
    key.insert(key.begin(), static_cast<char>('0' + xr + 1));
    for (auto [r, c] : cells) key[2 + r * (xc + 1) + c] = '1';
    return key;
}

std::string brute_canonical(const std::vector<std::pair<int, int>>& cells) {
    std::string best;
    for (int t = 0; t < 8; ++t) {
        std::vector<std::pair<int, int>> cur;
        for (auto [r, c] : cells) {
            int nr = r, nc = c;
            switch (t % 4) {
                case 0: break;
                case 1: nr = c; nc = -r; break;
                case 2: nr = -r; nc = -c; break;
                case 3: nr = -c; nc = r; break;
            }
            if (t >= 4) nc = -nc;
            cur.push_back({nr, nc});
        }
        std::string k = brute_key(cur);
        if (best.empty() || k < best) best = k;
    }
    return best;
}

bool brute_connected(const std::vector<std::pair<int, int>>& cells) {
    std::set<std::pair<int, int>> s(cells.begin(), cells.end());
    std::vector<std::pair<int, int>> stack{cells[0]};
    std::set<std::pair<int, int>> seen{cells[0]};
    while (!stack.empty()) {
        auto [r, c] = stack.back();
        stack.pop_back();
        for (auto [dr, dc] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
            std::pair<int, int> n{r + dr, c + dc};
            if (s.count(n) && !seen.count(n)) {
                seen.insert(n);
                stack.push_back(n);
            }
        }
    }
    return seen.size() == cells.size();
}

std::set<std::string> brute_free_polyominoes(int k) {
    std::set<std::string> shapes;
    int n = k * k;
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    // iterate k-combinations of [0, n)
    while (true) {
        std::vector<std::pair<int, int>> cells;
        for (int i : idx) cells.push_back({i / k, i % k});
        if (brute_connected(cells)) shapes.insert(brute_canonical(cells));
        int i = k - 1;
        while (i >= 0 && idx[i] == n - k + i) --i;
        if (i < 0) break;
        ++idx[i];
        for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
    return shapes;
}

std::string glyph_canonical(const Glyph& g) {
    std::vector<std::pair<int, int>> cells;
    for (int r = 0; r < g.box; ++r)
        for (int c = 0; c < g.box; ++c)
            if (g.at(r, c)) cells.push_back({r, c});
    return brute_canonical(cells);
}

long hamming(const Glyph& a, const Glyph& b) {
    long d = 0;
    for (size_t i = 0; i < a.mask.size(); ++i) d += a.mask[i] != b.mask[i];
    return d;
}

}  // namespace

TEST_CASE("polyomino counts match the exhaustive oracle") {
    const int expect[] = {0, 1, 1, 2, 5, 12, 35};
    for (int k = 1; k <= 6; ++k) {
        auto ours = enumerate_polyominoes(k);
        auto brute = brute_free_polyominoes(k);
        CHECK(static_cast<int>(ours.size()) == expect[k]);
        CHECK(brute.size() == ours.size());
        std::set<std::string> our_keys;
        for (const auto& g : ours) {
            CHECK(g.popcount() == k);
            CHECK(g.connected4());
            our_keys.insert(glyph_canonical(g));
        }
        CHECK(our_keys == brute);
    }
}

TEST_CASE("glyph set capacities and determinism") {
    GlyphSet pent = generate_glyph_set(GlyphFamily::pentomino, 0, 0);
    CHECK(pent.count() == 12);
    GlyphSet hexo = generate_glyph_set(GlyphFamily::hexomino, 0, 0);
    CHECK(hexo.count() == 35);
    CHECK_THROWS_AS(generate_glyph_set(GlyphFamily::pentomino, 13, 0), Error);
    try {
        generate_glyph_set(GlyphFamily::hexomino, 99, 0);
        FAIL("expected capacity error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("35") != std::string::npos);
    }

    GlyphSet a = generate_glyph_set(GlyphFamily::cognitive, 100, 42);
    GlyphSet b = generate_glyph_set(GlyphFamily::cognitive, 100, 42);
    REQUIRE(a.count() == 100);
    for (int i = 0; i < 100; ++i) CHECK(a.glyphs[i].mask == b.glyphs[i].mask);

    GlyphSet c = generate_glyph_set(GlyphFamily::cognitive, 20, 43);
    bool any_differs = false;
    for (int i = 0; i < 20; ++i) any_differs = any_differs || (a.glyphs[i].mask != c.glyphs[i].mask);
    CHECK(any_differs);
}

TEST_CASE("cognitive glyphs are connected with pairwise Hamming >= 24") {
    GlyphSet set = generate_glyph_set(GlyphFamily::cognitive, 100, 7);
    for (const auto& g : set.glyphs) CHECK(g.connected4());
    for (int i = 0; i < set.count(); ++i)
        for (int j = i + 1; j < set.count(); ++j)
            CHECK(hamming(set.glyphs[i], set.glyphs[j]) >= kCognitiveHammingMin);
}

TEST_CASE("white-on-black render has exactly two pixel values") {
    GlyphSet set = generate_glyph_set(GlyphFamily::cognitive, 3, 1);
    RenderSpec spec;
    spec.canvas = 32;
    Array<float> img = render_object(set.glyphs[0], spec);
    CHECK(img.shape == Shape{3, 32, 32});
    std::set<float> values(img.v.begin(), img.v.end());
    CHECK(values == std::set<float>{0.0f, 1.0f});
}

TEST_CASE("background color change only affects mask-0 pixels") {
    GlyphSet set = generate_glyph_set(GlyphFamily::pentomino, 0, 0);
    RenderSpec s1, s2;
    s1.canvas = s2.canvas = 12;
    s1.fg = s2.fg = {250, 250, 250};
    s1.bg = {0, 0, 0};
    s2.bg = {20, 20, 220};
    Array<float> a = render_object(set.glyphs[3], s1);
    Array<float> b = render_object(set.glyphs[3], s2);
    const long hw = 12 * 12;
    for (long p = 0; p < hw; ++p) {
        bool fg_pixel = a[p] == 250.0f / 255.0f;
        for (int ch = 0; ch < 3; ++ch) {
            if (fg_pixel)
                CHECK(a[ch * hw + p] == b[ch * hw + p]);
        }
    }
    bool differs = false;
    for (long i = 0; i < a.size(); ++i) differs = differs || a[i] != b[i];
    CHECK(differs);
}

TEST_CASE("rotation closure: rendering at 90 equals rotating the 0 render") {
    GlyphSet set = generate_glyph_set(GlyphFamily::hexomino, 0, 0);
    for (int gi : {0, 7, 20}) {
        RenderSpec s0, s90;
        s0.canvas = s90.canvas = 12;
        s0.orientation = 0;
        s90.orientation = 90;
        Array<float> base = render_object(set.glyphs[gi], s0);
        Array<float> rot = render_object(set.glyphs[gi], s90);
        Array<float> expect = rotate_image(base, 90);
        CHECK(rot.v == expect.v);
    }
}

TEST_CASE("stripe renders are horizontal bars spanning the cell") {
    GlyphSet set = generate_glyph_set(GlyphFamily::stripe, 35, 0);
    RenderSpec spec;
    spec.canvas = 12;
    Array<float> img = render_object(set.glyphs[10], spec);
    const long hw = 12 * 12;
    // every row is constant: bars fill the width
    for (int r = 0; r < 12; ++r)
        for (int c = 1; c < 12; ++c)
            for (int ch = 0; ch < 3; ++ch)
                CHECK(img[ch * hw + r * 12 + c] == img[ch * hw + r * 12]);
    // and at least two distinct rows exist (alternating luminance)
    std::set<float> row_values;
    for (int r = 0; r < 12; ++r) row_values.insert(img[r * 12]);
    CHECK(row_values.size() == 2);
}

TEST_CASE("grid cell placement validates its range") {
    GlyphSet set = generate_glyph_set(GlyphFamily::pentomino, 0, 0);
    RenderSpec spec;
    spec.canvas = 36;
    spec.cell_row = 3;
    spec.cell_col = 0;
    CHECK_THROWS_AS(render_object(set.glyphs[0], spec), Error);
    spec.cell_row = 1;
    spec.cell_col = 2;
    Array<float> img = render_object(set.glyphs[0], spec);
    CHECK(img.shape == Shape{3, 36, 36});
}

TEST_CASE("rendered values stay in [0,1] and on the 8-bit lattice") {
    GlyphSet set = generate_glyph_set(GlyphFamily::cognitive, 2, 9);
    RenderSpec spec;
    spec.canvas = 32;
    spec.fg = {220, 110, 30};
    spec.bg = {60, 250, 250};
    Array<float> img = render_object(set.glyphs[1], spec);
    for (float v : img.v) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
        float scaled = v * 255.0f;
        CHECK(scaled == doctest::Approx(std::round(scaled)).epsilon(1e-6));
    }
}

TEST_CASE("distinct orientations collapse coincident rotations") {
    // Centered placement on the even 6x6 box shifts rotated polyominoes, so
    // pentomino orientations stay pairwise distinct as images.
    GlyphSet pent = generate_glyph_set(GlyphFamily::pentomino, 0, 0);
    for (const auto& g : pent.glyphs) {
        auto d = distinct_orientations(g);
        CHECK(d.size() == 4);
        CHECK(d[0] == 0);
    }
    // Palindromic stripe patterns coincide with their 180-degree rotation.
    GlyphSet stripes = generate_glyph_set(GlyphFamily::stripe, 35, 0);
    bool found_reduced = false, found_full = false;
    for (const auto& g : stripes.glyphs) {
        auto d = distinct_orientations(g);
        CHECK(!d.empty());
        if (d.size() < 4) found_reduced = true;
        if (d.size() == 4) found_full = true;
    }
    CHECK(found_reduced);
    CHECK(found_full);
}

TEST_CASE("games palette has pairwise distinct, well-separated luminances") {
    const auto& pal = games_palette();
    for (size_t i = 0; i < pal.size(); ++i)
        for (size_t j = i + 1; j < pal.size(); ++j)
            CHECK(std::abs(luminance(pal[i]) - luminance(pal[j])) >= 20.0);
}

TEST_CASE("hue palette is evenly spaced and distinct") {
    auto pal = hue_palette(100);
    CHECK(pal.size() == 100);
    std::set<std::string> distinct;
    for (auto c : pal)
        distinct.insert(std::to_string(c.r) + "," + std::to_string(c.g) + "," + std::to_string(c.b));
    CHECK(distinct.size() == 100);
}

TEST_CASE("png contact sheet is written with a valid signature") {
    GlyphSet set = generate_glyph_set(GlyphFamily::pentomino, 0, 0);
    std::string path = "contact_sheet_test.png";
    write_contact_sheet(set, path);
    FILE* f = std::fopen(path.c_str(), "rb");
    REQUIRE(f != nullptr);
    unsigned char sig[8] = {};
    size_t n = std::fread(sig, 1, 8, f);
    std::fclose(f);
    std::remove(path.c_str());
    REQUIRE(n == 8);
    CHECK(sig[0] == 0x89);
    CHECK(sig[1] == 'P');
}
