#ifndef PDMR_IO_HPP
#define PDMR_IO_HPP

// Configuration ingestion and result serialization.
//
// Scenes are nested key-value text: `[section]` headers open a new element
// (repeated sections append to the scene lists), `key = value` lines set its
// fields. Unknown sections or keys are errors; every parse error carries a
// line number. Results go to tab-separated tables with `#` header lines and,
// for maps, optionally to 16-bit grayscale PGM heatmaps.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pdmr/fit.hpp"
#include "pdmr/scan.hpp"
#include "pdmr/scene.hpp"

namespace pdmr {

inline constexpr const char* kToolVersion = "0.1.0";

// Parse/validation failure with position information.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, int line = 0)
      : std::runtime_error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

Scene load_scene(const std::filesystem::path& path);
Scene parse_scene(std::istream& in, const std::string& origin);

enum class MapFormat { delimited, grayscale_image, both };

// Writes `<path>` as a long-format TSV (a, b, value per line) with a
// self-describing header; with a grayscale format also writes `<path>.pgm`
// (16-bit, min-max normalized; a constant map flags zero dynamic range and
// renders mid-gray). Values round-trip exactly through the text format.
void write_map(const Map2D& map, const ScanResult& meta, const std::string& which,
               const std::filesystem::path& path, MapFormat format = MapFormat::delimited);

// Full result set of a scan (reset/reaction/tau maps as applicable) into a
// directory, named <stem>_reset.tsv etc.
void write_scan_result(const ScanResult& result, const std::filesystem::path& dir,
                       const std::string& stem, MapFormat format = MapFormat::delimited);

struct LoadedMap {
  Map2D map;
  std::vector<std::string> header;  // raw header lines, without the leading '#'
};
LoadedMap read_map(const std::filesystem::path& path);

void write_sweep_table(std::span<const SweepRow> rows, uint64_t scene_hash,
                       const std::filesystem::path& path);
void write_contrast_table(std::span<const ContrastRow> rows, uint64_t scene_hash,
                          const std::filesystem::path& path);
void write_charge_record(const ChargeRecord& record, const std::filesystem::path& path);
void write_trace(std::span<const std::pair<double, double>> series,
                 const std::string& col_a, const std::string& col_b,
                 const std::filesystem::path& path);

// Sweep datasets for fitting: TSV with columns p_main, p_aux, current, sigma.
SweepDataset read_sweep_dataset(const std::filesystem::path& path);
void write_sweep_dataset(const SweepDataset& data, const std::filesystem::path& path);

void write_fit_report(const FitReport& report, const std::filesystem::path& path);

}  // namespace pdmr

#endif
