#include "reeflora/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "reeflora/parallel.hpp"
#include "reeflora/rng.hpp"

namespace reeflora {

namespace {

void check_site_code(const std::string& site) {
    const bool ok = site.size() == 3 && std::all_of(site.begin(), site.end(), [](unsigned char c) {
                        return std::isupper(c) || std::isdigit(c);
                    });
    if (!ok) throw ConfigError("site code '" + site + "' must be 3 uppercase characters");
}

nlohmann::ordered_json record_to_json(const TileRecord& r) {
    nlohmann::ordered_json j;
    j["tile_path"] = r.tile_path;
    j["source_image_id"] = r.source_image_id;
    j["tile_index"] = r.tile_index;
    j["offset_x"] = r.offset_x;
    j["offset_y"] = r.offset_y;
    auto labels = nlohmann::ordered_json::array();
    for (int i = 0; i < kNumClasses; ++i) labels.push_back(static_cast<int>(r.labels.bits[i]));
    j["labels"] = labels;
    j["site"] = r.site;
    j["season"] = season_name(r.season);
    if (r.depth_m) j["depth_m"] = *r.depth_m;
    return j;
}

TileRecord record_from_json(const nlohmann::json& j, const std::string& where) {
    try {
        TileRecord r;
        r.tile_path = j.at("tile_path").get<std::string>();
        r.source_image_id = j.at("source_image_id").get<std::string>();
        r.tile_index = j.at("tile_index").get<int>();
        r.offset_x = j.at("offset_x").get<int>();
        r.offset_y = j.at("offset_y").get<int>();
        const auto& labels = j.at("labels");
        if (labels.size() != kNumClasses) {
            throw IoError("label vector must have " + std::to_string(kNumClasses) + " entries");
        }
        for (int i = 0; i < kNumClasses; ++i) {
            const int v = labels[static_cast<std::size_t>(i)].get<int>();
            if (v != 0 && v != 1) throw IoError("label entries must be 0 or 1");
            r.labels.bits[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
        }
        r.site = j.at("site").get<std::string>();
        r.season = season_from_name(j.at("season").get<std::string>());
        if (j.contains("depth_m")) r.depth_m = j.at("depth_m").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(where + ": bad tile record: " + e.what());
    }
}

// Largest-remainder apportionment of n items into len(ratios) buckets.
std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& ratios) {
    std::vector<std::size_t> base(ratios.size());
    std::vector<std::pair<double, std::size_t>> frac;  // (remainder, bucket), stable by bucket
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        const double quota = static_cast<double>(n) * ratios[i];
        base[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
        assigned += base[i];
        frac.emplace_back(quota - static_cast<double>(base[i]), i);
    }
    std::stable_sort(frac.begin(), frac.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) base[frac[k % frac.size()].second]++;
    return base;
}

Manifest manifest_like(const Manifest& src) {
    Manifest m;
    m.schema_version = src.schema_version;
    m.tile_size = src.tile_size;
    m.base_dir = src.base_dir;
    return m;
}

// Keep records of the listed images, preserving manifest order.
Manifest filter_by_ids(const Manifest& src, const std::set<std::string>& ids) {
    Manifest out = manifest_like(src);
    for (const auto& r : src.records) {
        if (ids.count(r.source_image_id)) out.records.push_back(r);
    }
    return out;
}

// Shuffle unique ids (sorted first so the permutation depends only on the
// id set and the seed) and partition them by largest remainder.
std::vector<std::set<std::string>> partition_ids(std::vector<std::string> ids,
                                                 const std::vector<double>& ratios,
                                                 std::uint64_t seed) {
    std::sort(ids.begin(), ids.end());
    Pcg32 rng(seed, /*stream=*/0);
    rng.shuffle(ids);
    const auto counts = apportion(ids.size(), ratios);
    std::vector<std::set<std::string>> buckets(ratios.size());
    std::size_t pos = 0;
    for (std::size_t b = 0; b < counts.size(); ++b) {
        for (std::size_t i = 0; i < counts[b]; ++i) buckets[b].insert(ids[pos++]);
    }
    return buckets;
}

}  // namespace

const char* season_name(Season s) { return s == Season::dry ? "dry" : "wet"; }

Season season_from_name(const std::string& name) {
    if (name == "dry") return Season::dry;
    if (name == "wet") return Season::wet;
    throw ConfigError("unknown season '" + name + "' (expected dry or wet)");
}

void Manifest::validate() const {
    if (schema_version != 1) {
        throw IoError("unsupported manifest schema_version " + std::to_string(schema_version));
    }
    if (tile_size < 1) throw IoError("manifest tile_size must be positive");
    std::set<std::pair<std::string, int>> seen;
    std::map<std::string, Season> season_of;
    for (const auto& r : records) {
        check_site_code(r.site);
        if (!seen.insert({r.source_image_id, r.tile_index}).second) {
            throw IoError("duplicate tile (" + r.source_image_id + ", " +
                          std::to_string(r.tile_index) + ") in manifest");
        }
        auto [it, inserted] = season_of.try_emplace(r.source_image_id, r.season);
        if (!inserted && it->second != r.season) {
            throw IoError("source image " + r.source_image_id + " appears in both seasons");
        }
    }
}

void Manifest::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
    nlohmann::ordered_json header;
    header["schema_version"] = schema_version;
    header["tile_size"] = tile_size;
    auto classes = nlohmann::ordered_json::array();
    for (const char* c : kClassNames) classes.push_back(c);
    header["classes"] = classes;
    out << header.dump() << "\n";
    for (const auto& r : records) out << record_to_json(r).dump() << "\n";
    if (!out) throw IoError("short write to manifest '" + path.string() + "'");
}

Manifest Manifest::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read manifest '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("manifest '" + path.string() + "' is empty");
    Manifest m;
    try {
        const auto header = nlohmann::json::parse(line);
        m.schema_version = header.at("schema_version").get<int>();
        m.tile_size = header.at("tile_size").get<int>();
        const auto& classes = header.at("classes");
        if (classes.size() != kNumClasses) {
            throw IoError("manifest declares " + std::to_string(classes.size()) + " classes");
        }
        for (int i = 0; i < kNumClasses; ++i) {
            if (classes[static_cast<std::size_t>(i)].get<std::string>() !=
                kClassNames[static_cast<std::size_t>(i)]) {
                throw IoError("manifest class order differs from " +
                              std::string(kClassNames[static_cast<std::size_t>(i)]));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("manifest '" + path.string() + "': bad header: " + e.what());
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError("manifest '" + path.string() + "' line " + std::to_string(line_no) +
                          ": " + e.what());
        }
        m.records.push_back(
            record_from_json(j, path.string() + ":" + std::to_string(line_no)));
    }
    m.base_dir = path.parent_path();
    m.validate();
    return m;
}

std::filesystem::path Manifest::resolve_tile_path(const TileRecord& r) const {
    const std::filesystem::path p(r.tile_path);
    if (p.is_absolute() || base_dir.empty()) return p;
    return base_dir / p;
}

std::vector<std::string> Manifest::source_image_ids() const {
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& r : records) {
        if (seen.insert(r.source_image_id).second) ids.push_back(r.source_image_id);
    }
    return ids;
}

std::vector<int> tile_offsets(int extent, int tile) {
    if (extent < tile) {
        throw GeometryError("extent " + std::to_string(extent) + " smaller than tile " +
                            std::to_string(tile));
    }
    const int n = extent / tile;
    std::vector<int> offsets(static_cast<std::size_t>(n));
    if (n == 1) {
        offsets[0] = 0;
        return offsets;
    }
    const double step = static_cast<double>(extent - tile) / static_cast<double>(n - 1);
    for (int i = 0; i < n; ++i) {
        offsets[static_cast<std::size_t>(i)] =
            static_cast<int>(std::lround(static_cast<double>(i) * step));
    }
    return offsets;
}

std::vector<TilePlan> plan_tiles(int width, int height, int tile) {
    const auto xs = tile_offsets(width, tile);
    const auto ys = tile_offsets(height, tile);
    std::vector<TilePlan> plans;
    plans.reserve(xs.size() * ys.size());
    for (int y : ys) {
        for (int x : xs) plans.push_back({x, y});
    }
    return plans;
}

std::vector<TileCut> tile_image(const ImageU8& image, int tile) {
    const auto plans = plan_tiles(image.width, image.height, tile);
    std::vector<TileCut> cuts;
    cuts.reserve(plans.size());
    for (const auto& p : plans) {
        cuts.push_back({p, crop(image, p.offset_x, p.offset_y, tile, tile)});
    }
    return cuts;
}

std::string tile_file_name(const std::string& image_id, int tile_index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "_t%03d.png", tile_index);
    return image_id + buf;
}

Manifest build_manifest(const std::vector<SourceImageInfo>& images, int tile) {
    Manifest m;
    m.tile_size = tile;
    for (const auto& img : images) {
        check_site_code(img.site);
        const auto plans = plan_tiles(img.width, img.height, tile);
        for (std::size_t i = 0; i < plans.size(); ++i) {
            TileRecord r;
            r.tile_path = tile_file_name(img.id, static_cast<int>(i));
            r.source_image_id = img.id;
            r.tile_index = static_cast<int>(i);
            r.offset_x = plans[i].offset_x;
            r.offset_y = plans[i].offset_y;
            r.labels = img.labels;
            r.site = img.site;
            r.season = img.season;
            r.depth_m = img.depth_m;
            m.records.push_back(std::move(r));
        }
    }
    m.validate();
    return m;
}

void SplitSpec::validate() const {
    if (mode == SplitMode::mixup) {
        if (train_ratio <= 0 || val_ratio <= 0 || test_ratio <= 0) {
            throw ConfigError("split ratios must be positive");
        }
        const double sum = train_ratio + val_ratio + test_ratio;
        if (std::abs(sum - 1.0) > 1e-9) {
            throw ConfigError("split ratios must sum to 1, got " + std::to_string(sum));
        }
    }
    if (mode == SplitMode::site_holdout && holdout_sites.empty()) {
        throw ConfigError("site_holdout mode requires at least one holdout site");
    }
    for (const auto& s : holdout_sites) check_site_code(s);
}

SplitResult split_grouped(const Manifest& manifest, const SplitSpec& spec) {
    if (manifest.records.empty()) throw ContractError("cannot split an empty manifest");
    spec.validate();

    SplitResult out;
    switch (spec.mode) {
        case SplitMode::mixup: {
            auto buckets = partition_ids(manifest.source_image_ids(),
                                         {spec.train_ratio, spec.val_ratio, spec.test_ratio},
                                         spec.seed);
            out.train = filter_by_ids(manifest, buckets[0]);
            out.val = filter_by_ids(manifest, buckets[1]);
            out.test = filter_by_ids(manifest, buckets[2]);
            break;
        }
        case SplitMode::season_transfer: {
            std::vector<std::string> in_season;
            std::set<std::string> test_ids;
            std::set<std::string> seen;
            for (const auto& r : manifest.records) {
                if (!seen.insert(r.source_image_id).second) continue;
                if (r.season == spec.train_season) {
                    in_season.push_back(r.source_image_id);
                } else {
                    test_ids.insert(r.source_image_id);
                }
            }
            // 7:1 within the training season (train and val ratios renormalized).
            const double denom = spec.train_ratio + spec.val_ratio;
            auto buckets = partition_ids(
                in_season, {spec.train_ratio / denom, spec.val_ratio / denom}, spec.seed);
            out.train = filter_by_ids(manifest, buckets[0]);
            out.val = filter_by_ids(manifest, buckets[1]);
            out.test = filter_by_ids(manifest, test_ids);
            break;
        }
        case SplitMode::site_holdout: {
            std::set<std::string> manifest_sites;
            for (const auto& r : manifest.records) manifest_sites.insert(r.site);
            std::set<std::string> holdout(spec.holdout_sites.begin(), spec.holdout_sites.end());
            for (const auto& s : holdout) {
                if (!manifest_sites.count(s)) {
                    throw ConfigError("holdout site '" + s + "' not present in manifest");
                }
            }
            std::vector<std::string> remaining;
            std::set<std::string> test_ids;
            std::set<std::string> seen;
            for (const auto& r : manifest.records) {
                if (!seen.insert(r.source_image_id).second) continue;
                if (holdout.count(r.site)) {
                    test_ids.insert(r.source_image_id);
                } else {
                    remaining.push_back(r.source_image_id);
                }
            }
            const double denom = spec.train_ratio + spec.val_ratio;
            auto buckets = partition_ids(
                remaining, {spec.train_ratio / denom, spec.val_ratio / denom}, spec.seed);
            out.train = filter_by_ids(manifest, buckets[0]);
            out.val = filter_by_ids(manifest, buckets[1]);
            out.test = filter_by_ids(manifest, test_ids);
            break;
        }
    }
    if (out.train.records.empty() || out.val.records.empty() || out.test.records.empty()) {
        throw Error("split produced an empty subset (train " +
                    std::to_string(out.train.records.size()) + ", val " +
                    std::to_string(out.val.records.size()) + ", test " +
                    std::to_string(out.test.records.size()) + ")");
    }
    return out;
}

ChannelHistogram channel_histogram(const Manifest& manifest, std::int64_t sample_n,
                                   std::uint64_t seed) {
    if (manifest.records.empty()) throw ContractError("histogram requires a non-empty manifest");
    std::vector<std::size_t> indices(manifest.records.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    if (sample_n > 0 && sample_n < static_cast<std::int64_t>(indices.size())) {
        Pcg32 rng(seed, /*stream=*/0);
        rng.shuffle(indices);
        indices.resize(static_cast<std::size_t>(sample_n));
        std::sort(indices.begin(), indices.end());
    }

    ChannelHistogram hist;
    std::vector<std::optional<std::string>> errors(indices.size());
    std::vector<std::array<std::array<std::uint64_t, 256>, 3>> partial(indices.size());
    std::vector<char> counted(indices.size(), 0);
    parallel_for(static_cast<std::int64_t>(indices.size()), [&](std::int64_t k) {
        const auto& rec = manifest.records[indices[static_cast<std::size_t>(k)]];
        try {
            const ImageU8 img = read_image(manifest.resolve_tile_path(rec));
            if (img.channels != 3) throw IoError("expected a 3-channel tile");
            auto& bins = partial[static_cast<std::size_t>(k)];
            for (auto& channel : bins) channel.fill(0);
            const std::size_t n = img.pixels.size();
            for (std::size_t i = 0; i < n; i += 3) {
                ++bins[0][img.pixels[i]];
                ++bins[1][img.pixels[i + 1]];
                ++bins[2][img.pixels[i + 2]];
            }
            counted[static_cast<std::size_t>(k)] = 1;
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(k)] = rec.tile_path + ": " + e.what();
        }
    });
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (counted[k]) {
            ++hist.tiles_counted;
            for (int c = 0; c < 3; ++c)
                for (int b = 0; b < 256; ++b)
                    hist.bins[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)] +=
                        partial[k][static_cast<std::size_t>(c)][static_cast<std::size_t>(b)];
        } else if (errors[k]) {
            hist.errors.push_back(*errors[k]);
        }
    }
    return hist;
}

nlohmann::ordered_json ChannelHistogram::to_json() const {
    nlohmann::ordered_json j;
    j["tiles_counted"] = tiles_counted;
    const char* names[3] = {"red", "green", "blue"};
    for (int c = 0; c < 3; ++c) {
        j[names[c]] = bins[static_cast<std::size_t>(c)];
    }
    j["errors"] = errors;
    return j;
}

std::string ChannelHistogram::to_csv() const {
    std::ostringstream out;
    out << "channel,bin,count\n";
    const char* names[3] = {"red", "green", "blue"};
    for (int c = 0; c < 3; ++c) {
        for (int b = 0; b < 256; ++b) {
            out << names[c] << "," << b << ","
                << bins[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)] << "\n";
        }
    }
    return out.str();
}

std::vector<SiteComposition> composition_report(const Manifest& manifest) {
    if (manifest.records.empty()) throw ContractError("composition requires a non-empty manifest");
    std::map<std::string, SiteComposition> by_site;
    for (const auto& r : manifest.records) {
        auto& row = by_site[r.site];
        row.site = r.site;
        ++row.tiles;
        for (int i = 0; i < kNumClasses; ++i) {
            row.counts[static_cast<std::size_t>(i)] += r.labels.bits[static_cast<std::size_t>(i)];
        }
    }
    std::vector<SiteComposition> rows;
    rows.reserve(by_site.size());
    for (auto& [site, row] : by_site) {
        long long total = 0;
        for (long long c : row.counts) total += c;
        row.empty = total == 0;
        for (int i = 0; i < kNumClasses; ++i) {
            row.pct[static_cast<std::size_t>(i)] =
                row.empty ? 0.0
                          : 100.0 * static_cast<double>(row.counts[static_cast<std::size_t>(i)]) /
                                static_cast<double>(total);
        }
        rows.push_back(row);
    }
    return rows;
}

nlohmann::ordered_json composition_to_json(const std::vector<SiteComposition>& rows) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
        nlohmann::ordered_json j;
        j["site"] = row.site;
        j["tiles"] = row.tiles;
        nlohmann::ordered_json counts, pct;
        for (int i = 0; i < kNumClasses; ++i) {
            counts[kClassNames[static_cast<std::size_t>(i)]] =
                row.counts[static_cast<std::size_t>(i)];
            pct[kClassNames[static_cast<std::size_t>(i)]] =
                std::round(row.pct[static_cast<std::size_t>(i)] * 100.0) / 100.0;
        }
        j["label_counts"] = counts;
        j["label_pct"] = pct;
        j["empty"] = row.empty;
        arr.push_back(j);
    }
    return arr;
}

}  // namespace reeflora
