#pragma once

#include <optional>
#include <string>
#include <vector>

#include "corelnet/common.hpp"
#include "corelnet/glyphs.hpp"

namespace corelnet {

// Base task kinds. Variants (spurious backgrounds, identity-rules-4 pattern
// swaps, restricted permutations) are flags on TaskConfig.
enum class TaskKind {
    same_diff,
    rmts,
    dist3,
    identity_rules,
    rmts3,
    same_diff6,
    identity_rules4,
    dist_n,
    separated_inputs,
    game_same,
    game_between,
    game_occurs,
    game_xoccurs,
    game_row_matching,
    game_colour_shape,
    game_left_of,
};

enum class Id4Variant { full, missing, flipped, flipped_missing };

struct TaskConfig {
    TaskKind kind = TaskKind::same_diff;
    bool spurious = false;              // independent random background color per object
    Id4Variant id4 = Id4Variant::full;  // identity_rules4 only
    int n = 10;                         // dist_n only
    bool restricted = false;            // dist_n: train permutations preserve the first N-3 set
    GlyphFamily game_family = GlyphFamily::pentomino;  // relational games only

    bool is_game() const { return kind >= TaskKind::game_same; }

    // canonical task id, e.g. "rmts", "same_diff_spurious", "dist10_restricted",
    // "identity_rules4_missing", "game_row_matching"
    std::string name() const;
};

TaskConfig task_from_name(const std::string& name);
std::vector<std::string> all_task_names();

struct TaskInfo {
    int seq_len = 0;      // T
    int num_classes = 0;
    int k_min = 0;        // minimum training-shape requirement (cognitive tasks)
    int max_m = 0;        // 100 - k_min; 0 for relational games
    bool relation_holdout = false;
};

TaskInfo task_info(const TaskConfig& cfg);

// Shape inventory and fixed rendering resources, built once and shared
// read-only across runs.
struct TaskContext {
    GlyphSet cognitive;    // the 100-shape inventory
    GlyphSet pentominoes;  // 12
    GlyphSet hexominoes;   // 35
    GlyphSet stripes;      // 35
    std::vector<Rgb> spurious_palette;  // 100 saturated hues
    int image_size = 32;   // cognitive canvas (games cells are always 12)

    static TaskContext make(int image_size = 32, uint64_t glyph_seed = 2022);
    // process-wide default (32 px); thread-safe to share
    static const TaskContext& standard();

    const GlyphSet& game_set(GlyphFamily f) const;
};

constexpr int kShapeInventory = 100;

// Disjoint train/test shape split. m = 0 keeps the test side empty and
// evaluation falls back to training shapes (in-distribution).
struct Split {
    int m = 0;
    uint64_t seed = 0;
    std::vector<int> train_ids;
    std::vector<int> test_ids;

    const std::vector<int>& pool(bool test_side) const {
        return (test_side && !test_ids.empty()) ? test_ids : train_ids;
    }
};

Split split_glyphs(const TaskConfig& cfg, int m, uint64_t seed);

struct EpisodeMeta {
    std::string task;
    std::string family;          // relational games: the glyph family rendered
    std::vector<int> glyph_ids;  // per image; -1 for blanks and color frames
    std::vector<int> colors;     // games palette / hue palette index; -1 none
    std::vector<int> orients;    // degrees; games only
    std::vector<int> bg_colors;  // spurious palette index; -1 none
    std::string pattern;         // abstract structure, '|'-separated per group
    int answer_pos = -1;
    bool test_side = false;
};

struct Episode {
    std::vector<Array<float>> images;
    int num_classes = 0;
    int label = -1;
    EpisodeMeta meta;
};

// Pure function of (context, config, split, side, stream, index): labels and
// answer positions are exactly balanced over index blocks.
Episode gen_episode(const TaskContext& ctx, const TaskConfig& cfg, const Split& split,
                    bool test_side, uint64_t stream, long index);

std::vector<Episode> gen_episodes(const TaskContext& ctx, const TaskConfig& cfg,
                                  const Split& split, bool test_side, uint64_t stream,
                                  long first_index, int count);

// Recomputes the label from metadata and the rule definition alone (brute
// force over candidates where applicable). Never consults episode.label;
// inconsistent metadata is reported as an error.
int oracle_label(const Episode& ep);

// Re-renders every image from metadata and compares bit-exactly.
void oracle_verify_images(const TaskContext& ctx, const Episode& ep);

// First-occurrence canonical equality structure, e.g. (7,3,7) -> "ABA".
std::string canonical_pattern(const std::vector<int>& ids);

// Pattern whitelists for relation-holdout tasks (canonical forms).
std::vector<std::string> holdout_patterns(const TaskConfig& cfg, bool test_side);

}  // namespace corelnet
