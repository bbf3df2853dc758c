#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reeflora/image.hpp"
#include "reeflora/labels.hpp"

namespace reeflora {

enum class Season { dry, wet };

const char* season_name(Season s);
Season season_from_name(const std::string& name);  // ConfigError if unknown

inline constexpr int kDefaultTileSize = 512;

// One tile cut from a survey photo, with its annotation.
struct TileRecord {
    std::string tile_path;
    std::string source_image_id;
    int tile_index = 0;
    int offset_x = 0;
    int offset_y = 0;
    LabelVector labels;
    std::string site;  // 3-letter code, e.g. TTB
    Season season = Season::dry;
    std::optional<double> depth_m;
};

// JSON-lines file: a schema header line followed by one TileRecord per line.
struct Manifest {
    int schema_version = 1;
    int tile_size = kDefaultTileSize;
    std::vector<TileRecord> records;
    std::filesystem::path base_dir;  // set on load; not serialized

    void validate() const;  // duplicate (id, index), site/label sanity
    void save(const std::filesystem::path& path) const;
    static Manifest load(const std::filesystem::path& path);

    std::filesystem::path resolve_tile_path(const TileRecord& r) const;
    std::vector<std::string> source_image_ids() const;  // unique, first-appearance order
};

// --------------------------------------------------------------------------
// Tiling geometry: floor(W/tile) x floor(H/tile) tiles, offsets spread evenly
// from 0 to extent - tile (rounded to integer pixels), so the grid touches
// all four image borders and neighbouring tiles may overlap slightly when
// the extent is not a multiple of the tile size.
// --------------------------------------------------------------------------
std::vector<int> tile_offsets(int extent, int tile);

struct TilePlan {
    int offset_x = 0;
    int offset_y = 0;
};

// Row-major over the tile grid; GeometryError if the image is smaller than
// one tile.
std::vector<TilePlan> plan_tiles(int width, int height, int tile);

struct TileCut {
    TilePlan plan;
    ImageU8 raster;
};

std::vector<TileCut> tile_image(const ImageU8& image, int tile = kDefaultTileSize);

// Metadata of a source photo; enough to build a manifest without decoding
// (or even having) the pixels.
struct SourceImageInfo {
    std::string id;
    int width = 0;
    int height = 0;
    LabelVector labels;
    std::string site = "UNK";
    Season season = Season::dry;
    std::optional<double> depth_m;
};

// Tile file naming shared by the manifest builder and the tiler.
std::string tile_file_name(const std::string& image_id, int tile_index);

Manifest build_manifest(const std::vector<SourceImageInfo>& images, int tile = kDefaultTileSize);

// --------------------------------------------------------------------------
// Splits. All modes operate at source-image granularity so tiles of one
// photo never straddle a split boundary.
// --------------------------------------------------------------------------
enum class SplitMode { mixup, season_transfer, site_holdout };

struct SplitSpec {
    SplitMode mode = SplitMode::mixup;
    double train_ratio = 0.7;
    double val_ratio = 0.1;
    double test_ratio = 0.2;
    std::uint64_t seed = 0;
    std::vector<std::string> holdout_sites;     // site_holdout
    Season train_season = Season::dry;          // season_transfer

    void validate() const;
};

struct SplitResult {
    Manifest train, val, test;
};

SplitResult split_grouped(const Manifest& manifest, const SplitSpec& spec);

// --------------------------------------------------------------------------
// Channel statistics and per-site composition.
// --------------------------------------------------------------------------
struct ChannelHistogram {
    std::array<std::array<std::uint64_t, 256>, 3> bins{};
    std::int64_t tiles_counted = 0;
    std::vector<std::string> errors;  // per-record failures, non-fatal

    nlohmann::ordered_json to_json() const;
    std::string to_csv() const;  // header channel,bin,count
};

ChannelHistogram channel_histogram(const Manifest& manifest, std::int64_t sample_n,
                                   std::uint64_t seed);

struct SiteComposition {
    std::string site;
    long long tiles = 0;
    std::array<long long, kNumClasses> counts{};  // positive labels per class
    std::array<double, kNumClasses> pct{};        // share of all positive labels, percent
    bool empty = false;                           // no positive label at this site
};

std::vector<SiteComposition> composition_report(const Manifest& manifest);

nlohmann::ordered_json composition_to_json(const std::vector<SiteComposition>& rows);

}  // namespace reeflora
