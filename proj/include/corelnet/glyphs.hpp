#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "corelnet/common.hpp"

namespace corelnet {

enum class GlyphFamily { cognitive, pentomino, hexomino, stripe };

const char* family_name(GlyphFamily f);
GlyphFamily family_from_name(const std::string& name);

// Binary object mask at glyph resolution (square box, row-major).
struct Glyph {
    int id = 0;
    GlyphFamily family = GlyphFamily::cognitive;
    int box = 0;  // mask is box x box
    std::vector<uint8_t> mask;

    uint8_t at(int r, int c) const { return mask[r * box + c]; }
    long popcount() const;
    bool connected4() const;  // single 4-connected component
};

// Rotate a mask by a multiple of 90 degrees (counterclockwise steps).
Glyph rotated(const Glyph& g, int degrees);

// Orientations (subset of {0,90,180,270}) whose rotated masks are pairwise
// distinct. Sampling from this set makes attribute equality coincide with
// rendered-image equality for symmetric shapes.
std::vector<int> distinct_orientations(const Glyph& g);

struct GlyphSet {
    GlyphFamily family = GlyphFamily::cognitive;
    uint64_t seed = 0;
    std::vector<Glyph> glyphs;

    int count() const { return static_cast<int>(glyphs.size()); }
    const Glyph& at(int id) const {
        require(id >= 0 && id < count(), "glyph id ", id, " out of range [0,", count(), ")");
        return glyphs[id];
    }
};

// One representative per free polyomino of k cells, canonicalized as the
// lexicographically smallest of its 8 symmetry images, sorted.
std::vector<Glyph> enumerate_polyominoes(int k);

// Deterministic glyph sets. count <= 0 selects the full family inventory for
// enumerable families; the cognitive family requires an explicit count.
// Cognitive glyphs are 16x16 connected blobs with pairwise Hamming
// distance >= 24.
GlyphSet generate_glyph_set(GlyphFamily family, int count, uint64_t seed);

constexpr int kCognitiveBox = 16;
constexpr int kCognitiveHammingMin = 24;

struct Rgb {
    uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

inline double luminance(Rgb c) { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }

// 8 foreground colors with pairwise luminance gaps >= 20 (left-of relies on
// luminance ordering being unambiguous).
const std::array<Rgb, 8>& games_palette();

// n evenly spaced fully saturated hues; the 100-color spurious palette.
std::vector<Rgb> hue_palette(int n);

struct RenderSpec {
    int canvas = 32;           // output is canvas x canvas pixels
    Rgb fg{255, 255, 255};
    Rgb bg{0, 0, 0};
    int orientation = 0;       // degrees, multiple of 90
    int cell_row = -1;         // >= 0: render into a 12x12 cell of a 36x36 grid
    int cell_col = -1;
};

// Rasterize a glyph: foreground where the (rotated, scaled) mask is set,
// background elsewhere. Pixel values are exact 8-bit lattice points v/255.
Array<float> render_object(const Glyph& g, const RenderSpec& spec);

// Solid-color canvas (separated-inputs color frames, blank grid cells).
Array<float> render_solid(int canvas, Rgb color);

// Rotate an image [3,S,S] by a multiple of 90 degrees (exact pixel permutation).
Array<float> rotate_image(const Array<float>& img, int degrees);

// Non-normative documentation export.
void write_png(const std::string& path, int width, int height,
               const std::vector<uint8_t>& rgb);
void write_contact_sheet(const GlyphSet& set, const std::string& path);

}  // namespace corelnet
