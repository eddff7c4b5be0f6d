#include "corelnet/glyphs.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <map>
#include <set>

namespace corelnet {

const char* family_name(GlyphFamily f) {
    switch (f) {
        case GlyphFamily::cognitive: return "cognitive";
        case GlyphFamily::pentomino: return "pentomino";
        case GlyphFamily::hexomino: return "hexomino";
        case GlyphFamily::stripe: return "stripe";
    }
    return "?";
}

GlyphFamily family_from_name(const std::string& name) {
    for (GlyphFamily f : {GlyphFamily::cognitive, GlyphFamily::pentomino, GlyphFamily::hexomino,
                          GlyphFamily::stripe})
        if (name == family_name(f)) return f;
    fail("unknown glyph family '", name, "'");
}

long Glyph::popcount() const {
    long n = 0;
    for (uint8_t m : mask) n += m ? 1 : 0;
    return n;
}

bool Glyph::connected4() const {
    long total = popcount();
    if (total == 0) return false;
    std::vector<uint8_t> seen(mask.size(), 0);
    std::vector<int> stack;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) {
            stack.push_back(static_cast<int>(i));
            seen[i] = 1;
            break;
        }
    long reached = 0;
    while (!stack.empty()) {
        int p = stack.back();
        stack.pop_back();
        ++reached;
        int r = p / box, c = p % box;
        const int dr[] = {1, -1, 0, 0}, dc[] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
            int nr = r + dr[d], nc = c + dc[d];
            if (nr < 0 || nr >= box || nc < 0 || nc >= box) continue;
            int q = nr * box + nc;
            if (mask[q] && !seen[q]) {
                seen[q] = 1;
                stack.push_back(q);
            }
        }
    }
    return reached == total;
}

Glyph rotated(const Glyph& g, int degrees) {
    int quarter = ((degrees / 90) % 4 + 4) % 4;
    require(degrees % 90 == 0, "orientation must be a multiple of 90 degrees, got ", degrees);
    Glyph out = g;
    if (quarter == 0) return out;
    int n = g.box;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            int sr = r, sc = c;
            // map output (r,c) back to source for a counterclockwise rotation
            if (quarter == 1) {
                sr = c;
                sc = n - 1 - r;
            } else if (quarter == 2) {
                sr = n - 1 - r;
                sc = n - 1 - c;
            } else {
                sr = n - 1 - c;
                sc = r;
            }
            out.mask[r * n + c] = g.mask[sr * n + sc];
        }
    return out;
}

std::vector<int> distinct_orientations(const Glyph& g) {
    std::vector<int> out;
    std::vector<std::vector<uint8_t>> seen;
    for (int deg : {0, 90, 180, 270}) {
        Glyph r = rotated(g, deg);
        bool dup = false;
        for (const auto& m : seen)
            if (m == r.mask) {
                dup = true;
                break;
            }
        if (!dup) {
            seen.push_back(r.mask);
            out.push_back(deg);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Polyomino enumeration
// ---------------------------------------------------------------------------

namespace {

using Cells = std::vector<std::pair<int, int>>;

Cells normalize(Cells cells) {
    int mr = cells[0].first, mc = cells[0].second;
    for (auto& [r, c] : cells) {
        mr = std::min(mr, r);
        mc = std::min(mc, c);
    }
    for (auto& [r, c] : cells) {
        r -= mr;
        c -= mc;
    }
    std::sort(cells.begin(), cells.end());
    return cells;
}

// key = (height, width, flattened bit rows); lexicographic order
std::string cells_key(const Cells& cells) {
    int h = 0, w = 0;
    for (auto& [r, c] : cells) {
        h = std::max(h, r + 1);
        w = std::max(w, c + 1);
    }
    std::string key;
    key.push_back(static_cast<char>(h));
    key.push_back(static_cast<char>(w));
    key.resize(2 + static_cast<size_t>(h) * w, '0');
    for (auto& [r, c] : cells) key[2 + r * w + c] = '1';
    return key;
}

Cells transform(const Cells& cells, int t) {
    Cells out = cells;
    for (auto& [r, c] : out) {
        int nr = r, nc = c;
        switch (t % 4) {
            case 0: break;
            case 1: nr = c; nc = -r; break;
            case 2: nr = -r; nc = -c; break;
            case 3: nr = -c; nc = r; break;
        }
        if (t >= 4) nc = -nc;
        r = nr;
        c = nc;
    }
    return normalize(out);
}

std::string canonical_key(const Cells& cells) {
    std::string best;
    for (int t = 0; t < 8; ++t) {
        std::string k = cells_key(transform(cells, t));
        if (best.empty() || k < best) best = k;
    }
    return best;
}

Glyph glyph_from_key(const std::string& key, int id, GlyphFamily fam, int box) {
    int h = key[0], w = key[1];
    require(h <= box && w <= box, "polyomino does not fit the glyph box");
    Glyph g;
    g.id = id;
    g.family = fam;
    g.box = box;
    g.mask.assign(static_cast<size_t>(box) * box, 0);
    int r0 = (box - h) / 2, c0 = (box - w) / 2;  // centered
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (key[2 + r * w + c] == '1') g.mask[(r0 + r) * box + (c0 + c)] = 1;
    return g;
}

}  // namespace

std::vector<Glyph> enumerate_polyominoes(int k) {
    require(k >= 1 && k <= 6, "polyomino cell count must be in [1,6], got ", k);
    // grow fixed polyominoes one cell at a time, dedupe by translation
    std::set<Cells> fixed{{{0, 0}}};
    for (int n = 1; n < k; ++n) {
        std::set<Cells> next;
        for (const Cells& shape : fixed) {
            for (auto [r, c] : shape) {
                const int dr[] = {1, -1, 0, 0}, dc[] = {0, 0, 1, -1};
                for (int d = 0; d < 4; ++d) {
                    std::pair<int, int> cand{r + dr[d], c + dc[d]};
                    if (std::find(shape.begin(), shape.end(), cand) != shape.end()) continue;
                    Cells grown = shape;
                    grown.push_back(cand);
                    next.insert(normalize(std::move(grown)));
                }
            }
        }
        fixed = std::move(next);
    }
    // collapse to free polyominoes via canonical symmetry keys
    std::set<std::string> keys;
    for (const Cells& shape : fixed) keys.insert(canonical_key(shape));

    GlyphFamily fam = k == 5 ? GlyphFamily::pentomino
                             : (k == 6 ? GlyphFamily::hexomino : GlyphFamily::cognitive);
    std::vector<Glyph> out;
    int id = 0;
    for (const std::string& key : keys) out.push_back(glyph_from_key(key, id++, fam, 6));
    return out;
}

// ---------------------------------------------------------------------------
// Glyph sets
// ---------------------------------------------------------------------------

namespace {

long hamming(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    long d = 0;
    for (size_t i = 0; i < a.size(); ++i) d += (a[i] != b[i]) ? 1 : 0;
    return d;
}

// Random connected blob: seeded at the center, grown by uniform frontier picks.
Glyph make_blob(uint64_t seed, int id, int attempt) {
    Rng rng = Rng::from(seed, 0x610B, static_cast<uint64_t>(id), static_cast<uint64_t>(attempt));
    const int box = kCognitiveBox;
    Glyph g;
    g.id = id;
    g.family = GlyphFamily::cognitive;
    g.box = box;
    g.mask.assign(static_cast<size_t>(box) * box, 0);
    long target = 48 + rng.randint(72);  // 48..119 of 256 cells
    std::vector<int> frontier;
    auto add_cell = [&](int r, int c) {
        g.mask[r * box + c] = 1;
        const int dr[] = {1, -1, 0, 0}, dc[] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
            int nr = r + dr[d], nc = c + dc[d];
            if (nr < 1 || nr >= box - 1 || nc < 1 || nc >= box - 1) continue;  // 1px border
            if (!g.mask[nr * box + nc]) frontier.push_back(nr * box + nc);
        }
    };
    add_cell(box / 2, box / 2);
    long placed = 1;
    while (placed < target && !frontier.empty()) {
        long j = rng.randint(static_cast<long>(frontier.size()));
        int p = frontier[j];
        frontier[j] = frontier.back();
        frontier.pop_back();
        if (g.mask[p]) continue;
        add_cell(p / box, p % box);
        ++placed;
    }
    return g;
}

GlyphSet stripes_set(int count, uint64_t seed) {
    // 6-bit row patterns ordered by (popcount, value); orientation rotates
    // bars to vertical.
    std::vector<int> patterns;
    for (int p = 1; p < 64; ++p) patterns.push_back(p);
    std::stable_sort(patterns.begin(), patterns.end(), [](int a, int b) {
        int pa = __builtin_popcount(a), pb = __builtin_popcount(b);
        return pa != pb ? pa < pb : a < b;
    });
    require(count <= static_cast<int>(patterns.size()), "stripe family holds ",
            patterns.size(), " distinct patterns, requested ", count);
    GlyphSet set;
    set.family = GlyphFamily::stripe;
    set.seed = seed;
    for (int i = 0; i < count; ++i) {
        Glyph g;
        g.id = i;
        g.family = GlyphFamily::stripe;
        g.box = 6;
        g.mask.assign(36, 0);
        for (int r = 0; r < 6; ++r)
            if (patterns[i] & (1 << r))
                for (int c = 0; c < 6; ++c) g.mask[r * 6 + c] = 1;
        set.glyphs.push_back(std::move(g));
    }
    return set;
}

}  // namespace

GlyphSet generate_glyph_set(GlyphFamily family, int count, uint64_t seed) {
    GlyphSet set;
    set.family = family;
    set.seed = seed;
    switch (family) {
        case GlyphFamily::pentomino:
        case GlyphFamily::hexomino: {
            std::vector<Glyph> all = enumerate_polyominoes(family == GlyphFamily::pentomino ? 5 : 6);
            if (count <= 0) count = static_cast<int>(all.size());
            require(count <= static_cast<int>(all.size()), family_name(family), " family holds ",
                    all.size(), " shapes, requested ", count);
            all.resize(count);
            set.glyphs = std::move(all);
            return set;
        }
        case GlyphFamily::stripe:
            return stripes_set(count <= 0 ? 35 : count, seed);
        case GlyphFamily::cognitive: {
            require(count >= 1, "cognitive family requires an explicit count, got ", count);
            require(count <= 1000, "cognitive family capped at 1000 glyphs, requested ", count);
            for (int id = 0; id < count; ++id) {
                bool ok = false;
                for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
                    Glyph g = make_blob(seed, id, attempt);
                    ok = true;
                    for (const Glyph& prev : set.glyphs)
                        if (hamming(prev.mask, g.mask) < kCognitiveHammingMin) {
                            ok = false;
                            break;
                        }
                    if (ok) set.glyphs.push_back(std::move(g));
                }
                require(ok, "could not place cognitive glyph ", id,
                        " with minimum Hamming distance ", kCognitiveHammingMin);
            }
            return set;
        }
    }
    fail("unknown glyph family");
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

const std::array<Rgb, 8>& games_palette() {
    // luminances: 42.8, 76.8, 108.5, 133.8, 163.4, 193.2, 216.6, 250.0
    static const std::array<Rgb, 8> pal = {{
        {20, 20, 220},
        {210, 20, 20},
        {220, 30, 220},
        {220, 110, 30},
        {40, 250, 40},
        {60, 250, 250},
        {250, 230, 60},
        {250, 250, 250},
    }};
    return pal;
}

std::vector<Rgb> hue_palette(int n) {
    require(n >= 1, "palette size must be positive");
    std::vector<Rgb> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        double h = 360.0 * i / n;
        double hp = h / 60.0;
        double x = 1.0 - std::abs(std::fmod(hp, 2.0) - 1.0);
        double r = 0, g = 0, b = 0;
        if (hp < 1) { r = 1; g = x; }
        else if (hp < 2) { r = x; g = 1; }
        else if (hp < 3) { g = 1; b = x; }
        else if (hp < 4) { g = x; b = 1; }
        else if (hp < 5) { r = x; b = 1; }
        else { r = 1; b = x; }
        out.push_back({static_cast<uint8_t>(std::lround(r * 255)),
                       static_cast<uint8_t>(std::lround(g * 255)),
                       static_cast<uint8_t>(std::lround(b * 255))});
    }
    return out;
}

namespace {

void paint_mask(Array<float>& img, const Glyph& g, int x0, int y0, int extent, Rgb fg, Rgb bg) {
    const int S = img.shape[1];
    const float fr = fg.r / 255.0f, fgr = fg.g / 255.0f, fb = fg.b / 255.0f;
    const float br = bg.r / 255.0f, bgr = bg.g / 255.0f, bb = bg.b / 255.0f;
    for (int i = 0; i < extent; ++i)
        for (int j = 0; j < extent; ++j) {
            int mr = i * g.box / extent, mc = j * g.box / extent;
            bool on = g.at(mr, mc) != 0;
            long p = static_cast<long>(y0 + i) * S + (x0 + j);
            img[0 * S * S + p] = on ? fr : br;
            img[1 * S * S + p] = on ? fgr : bgr;
            img[2 * S * S + p] = on ? fb : bb;
        }
}

}  // namespace

Array<float> render_solid(int canvas, Rgb color) {
    Array<float> img({3, canvas, canvas});
    const long hw = static_cast<long>(canvas) * canvas;
    std::fill(img.data(), img.data() + hw, color.r / 255.0f);
    std::fill(img.data() + hw, img.data() + 2 * hw, color.g / 255.0f);
    std::fill(img.data() + 2 * hw, img.data() + 3 * hw, color.b / 255.0f);
    return img;
}

Array<float> render_object(const Glyph& g, const RenderSpec& spec) {
    require(spec.canvas >= g.box, "canvas ", spec.canvas, " smaller than glyph box ", g.box);
    Glyph rg = rotated(g, spec.orientation);
    if (spec.cell_row < 0 && spec.cell_col < 0) {
        Array<float> img = render_solid(spec.canvas, spec.bg);
        paint_mask(img, rg, 0, 0, spec.canvas, spec.fg, spec.bg);
        return img;
    }
    require(spec.cell_row >= 0 && spec.cell_row < 3 && spec.cell_col >= 0 && spec.cell_col < 3,
            "grid cell (", spec.cell_row, ",", spec.cell_col, ") out of [0,3)x[0,3)");
    require(spec.canvas == 36, "grid placement requires a 36x36 canvas, got ", spec.canvas);
    Array<float> img = render_solid(spec.canvas, spec.bg);
    paint_mask(img, rg, spec.cell_col * 12, spec.cell_row * 12, 12, spec.fg, spec.bg);
    return img;
}

Array<float> rotate_image(const Array<float>& img, int degrees) {
    require(img.shape.size() == 3 && img.shape[1] == img.shape[2],
            "rotate_image expects [C,S,S], got ", shape_str(img.shape));
    int quarter = ((degrees / 90) % 4 + 4) % 4;
    require(degrees % 90 == 0, "rotation must be a multiple of 90 degrees");
    if (quarter == 0) return img;
    const int C = img.shape[0], n = img.shape[1];
    Array<float> out(img.shape);
    for (int ch = 0; ch < C; ++ch) {
        const float* src = img.data() + static_cast<long>(ch) * n * n;
        float* dst = out.data() + static_cast<long>(ch) * n * n;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                int sr = r, sc = c;
                if (quarter == 1) {
                    sr = c;
                    sc = n - 1 - r;
                } else if (quarter == 2) {
                    sr = n - 1 - r;
                    sc = n - 1 - c;
                } else {
                    sr = n - 1 - c;
                    sc = r;
                }
                dst[r * n + c] = src[sr * n + sc];
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// PNG export (documentation only)
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char* type, const std::vector<uint8_t>& data) {
    put_u32(out, static_cast<uint32_t>(data.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = crc32(0, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32(out, crc);
}

}  // namespace

void write_png(const std::string& path, int width, int height,
               const std::vector<uint8_t>& rgb) {
    require(static_cast<long>(rgb.size()) == 3l * width * height, "pixel buffer size mismatch");
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(height) * (1 + 3 * width));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), rgb.begin() + static_cast<long>(y) * 3 * width,
                   rgb.begin() + static_cast<long>(y + 1) * 3 * width);
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> zdata(zlen);
    require(compress2(zdata.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) == Z_OK,
            "zlib compression failed");
    zdata.resize(zlen);

    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(width));
    put_u32(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", zdata);
    put_chunk(out, "IEND", {});

    FILE* f = std::fopen(path.c_str(), "wb");
    require(f != nullptr, "cannot open ", path, " for writing");
    size_t written = std::fwrite(out.data(), 1, out.size(), f);
    std::fclose(f);
    require(written == out.size(), "short write to ", path);
}

void write_contact_sheet(const GlyphSet& set, const std::string& path) {
    const int cell = 20, per_row = 10;
    int rows = (set.count() + per_row - 1) / per_row;
    int W = per_row * cell, H = rows * cell;
    std::vector<uint8_t> rgb(static_cast<size_t>(3) * W * H, 32);
    for (int i = 0; i < set.count(); ++i) {
        const Glyph& g = set.glyphs[i];
        int gy = (i / per_row) * cell, gx = (i % per_row) * cell;
        int extent = cell - 4;
        for (int r = 0; r < extent; ++r)
            for (int c = 0; c < extent; ++c) {
                bool on = g.at(r * g.box / extent, c * g.box / extent) != 0;
                long p = (static_cast<long>(gy + 2 + r) * W + gx + 2 + c) * 3;
                uint8_t v = on ? 255 : 0;
                rgb[p] = rgb[p + 1] = rgb[p + 2] = v;
            }
    }
    write_png(path, W, H, rgb);
}

}  // namespace corelnet
