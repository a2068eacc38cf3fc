// capbias: capture-bias audits of image datasets.
//
//   capbias audit          exposure x ISO histograms, illumination table
//   capbias evaluate       the audit plus per-bin mAP of a detection file
//   capbias repeatability  precision/recall grids from point-set scenarios
//   capbias describe-bins  print the fixed bin edges
//   capbias fetch          pull metadata from a remote provider into a sidecar

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "capbias/capbias.hpp"

namespace fs = std::filesystem;

namespace {

struct AuditArgs {
  std::string annotations;
  std::string detections;
  std::vector<std::string> sidecars;
  std::string images;
  std::string ev_mode = "photometric";
  std::string out = "capbias-out";
  std::string format = "all";
  std::string split;
  std::string illumination;
  std::size_t max_dets = capbias::kDefaultMaxDets;
  double iou = capbias::kDefaultIouThreshold;
  double low_mid = capbias::ClassBoundaries{}.low_mid;
  double mid_high = capbias::ClassBoundaries{}.mid_high;
  unsigned threads = 1;
};

void write_documents(const fs::path& dir, const std::vector<capbias::OutputDocument>& docs) {
  fs::create_directories(dir);
  for (const auto& d : docs) {
    std::ofstream out(dir / d.name, std::ios::binary | std::ios::trunc);
    out.write(d.content.data(), static_cast<std::streamsize>(d.content.size()));
    if (!out) throw capbias::Error(capbias::ErrorCode::Io, "cannot write " + (dir / d.name).string());
    std::cerr << "wrote " << (dir / d.name).string() << "\n";
  }
}

void add_common_audit_options(CLI::App* cmd, AuditArgs& a) {
  cmd->add_option("--annotations", a.annotations, "Annotation document (images, annotations, categories)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--exif-sidecar", a.sidecars, "Sidecar EXIF document; repeatable, earlier wins")
      ->check(CLI::ExistingFile);
  cmd->add_option("--images", a.images, "Directory holding the image files named in the manifest")
      ->check(CLI::ExistingDirectory);
  cmd->add_option("--ev-mode", a.ev_mode, "Exposure value formula")
      ->check(CLI::IsMember({"photometric", "paper"}))
      ->capture_default_str();
  cmd->add_option("--out", a.out, "Output directory")->capture_default_str();
  cmd->add_option("--format", a.format, "Outputs to write")
      ->check(CLI::IsMember({"structured", "csv", "svg", "all"}))
      ->capture_default_str();
  cmd->add_option("--split", a.split, "Split label for the illumination table (default: annotation file stem)");
  cmd->add_option("--low-mid", a.low_mid, "EV boundary between low and mid illumination")->capture_default_str();
  cmd->add_option("--mid-high", a.mid_high, "EV boundary between mid and high illumination")->capture_default_str();
  cmd->add_option("--threads", a.threads, "Worker threads for image parsing")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

int run_audit_command(const AuditArgs& a, bool evaluate) {
  capbias::AuditConfig config;
  config.annotations = a.annotations;
  for (const auto& s : a.sidecars) config.exif_sidecars.emplace_back(s);
  if (!a.images.empty()) config.images_dir = fs::path(a.images);
  if (evaluate) config.detections = fs::path(a.detections);
  config.split = a.split;
  config.ev_mode = *capbias::parse_ev_mode(a.ev_mode);
  config.bounds = {a.low_mid, a.mid_high};
  config.max_dets = a.max_dets;
  config.iou_threshold = a.iou;
  config.threads = a.threads;
  if (a.illumination == "low") config.eval_illumination = capbias::Illumination::Low;
  if (a.illumination == "mid") config.eval_illumination = capbias::Illumination::Mid;
  if (a.illumination == "high") config.eval_illumination = capbias::Illumination::High;

  const capbias::AuditReport report = capbias::run_audit(config);

  std::vector<capbias::OutputDocument> docs;
  const auto append = [&](std::vector<capbias::OutputDocument> more) {
    docs.insert(docs.end(), more.begin(), more.end());
  };
  if (a.format == "structured" || a.format == "all") append(capbias::emit_tables(report, capbias::TableFormat::Structured));
  if (a.format == "csv" || a.format == "all") append(capbias::emit_tables(report, capbias::TableFormat::Csv));
  if (a.format == "svg" || a.format == "all") append(capbias::emit_heatmaps(report));
  write_documents(a.out, docs);

  const auto& t = report.illumination;
  std::cout << "images " << report.image_count << ", complete EXIF " << report.complete_count << " (coverage "
            << report.coverage << "), binned " << report.counts.total_assigned << ", warnings "
            << report.warnings.size() << "\n";
  std::cout << "illumination high " << t.high << ", mid " << t.mid << ", low " << t.low << "\n";
  if (report.global_map && report.global_map->map) std::cout << "global mAP " << *report.global_map->map << "\n";
  return 0;
}

int run_repeatability(const std::string& scenarios_path, double tolerance, std::optional<double> floor,
                      const std::string& out, const std::string& format) {
  const fs::path path(scenarios_path);
  const auto set = capbias::load_scenarios(capbias::read_file_text(path), path.parent_path());
  const auto grid = capbias::repeatability_grid(set.target, set.scenarios, tolerance, floor);

  std::vector<capbias::OutputDocument> docs;
  if (format == "structured" || format == "all") {
    nlohmann::ordered_json j;
    j["schema_version"] = capbias::kReportSchemaVersion;
    j["tool"] = {{"name", "capbias"}, {"version", capbias::kVersion}};
    j["input"] = {{"name", path.filename().string()},
                  {"sha256", capbias::sha256_hex(capbias::read_file_bytes(path))}};
    j["tolerance_px"] = tolerance;
    j["floor"] = floor ? nlohmann::ordered_json(*floor) : nlohmann::ordered_json(nullptr);
    j["precision"] = capbias::detail::score_cells_json(grid.precision);
    j["recall"] = capbias::detail::score_cells_json(grid.recall);
    j["scenario_counts"] = capbias::detail::count_cells_json(grid.scenario_counts);
    docs.push_back({"repeatability.json", j.dump(2) + "\n"});
  }
  if (format == "csv" || format == "all") {
    docs.push_back({"precision.csv", capbias::detail::grid_csv(grid.precision)});
    docs.push_back({"recall.csv", capbias::detail::grid_csv(grid.recall)});
  }
  if (format == "svg" || format == "all") {
    capbias::HeatmapStyle style;
    style.range = std::pair{0.0, 1.0};
    style.undefined_label = "no scenario";
    style.title = "Precision";
    docs.push_back({"precision.svg", capbias::render_heatmap(grid.precision, style)});
    style.title = "Recall";
    docs.push_back({"recall.svg", capbias::render_heatmap(grid.recall, style)});
  }
  write_documents(out, docs);
  return 0;
}

void describe_bins(std::ostream& os) {
  os << "exposure time bins (rows, seconds, half-open):\n";
  for (int i = 0; i < capbias::kGridSize; ++i) os << "  " << i << "  " << capbias::exposure_bin_label(i) << "\n";
  os << "ISO bins (columns, half-open; ISO >= " << capbias::kIsoEdges.back() << " clamps into bin "
     << capbias::kGridSize - 1 << "):\n";
  for (int i = 0; i < capbias::kGridSize; ++i) os << "  " << i << "  " << capbias::iso_bin_label(i) << "\n";
  os << "illumination classes (EV): low < " << capbias::ClassBoundaries{}.low_mid << " <= mid < "
     << capbias::ClassBoundaries{}.mid_high << " <= high\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capture-setting bias audits for image datasets"};
  app.set_version_flag("--version", std::string(capbias::kVersion));
  app.require_subcommand(1);

  AuditArgs audit_args;
  auto* audit = app.add_subcommand("audit", "Exposure x ISO histograms and illumination table");
  add_common_audit_options(audit, audit_args);

  AuditArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Audit plus per-bin mAP of detection results");
  add_common_audit_options(evaluate, eval_args);
  evaluate->add_option("--detections", eval_args.detections, "Detection results list")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--max-dets", eval_args.max_dets, "Detections kept per image")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  evaluate->add_option("--iou", eval_args.iou, "IoU threshold for a true positive")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  evaluate->add_option("--illumination", eval_args.illumination, "Only evaluate images of this illumination class")
      ->check(CLI::IsMember({"low", "mid", "high"}));

  std::string scenarios_path, rep_out = "capbias-out", rep_format = "all";
  double tolerance = capbias::kDefaultTolerancePx;
  std::optional<double> floor;
  auto* rep = app.add_subcommand("repeatability", "Precision/recall grids from point-set scenarios");
  rep->add_option("--scenarios", scenarios_path, "Scenario document (target + per-cell point sets)")
      ->required()
      ->check(CLI::ExistingFile);
  rep->add_option("--tolerance-px", tolerance, "Match radius in pixels")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  rep->add_option("--floor", floor, "Display floor applied to precision and recall")->check(CLI::Range(0.0, 1.0));
  rep->add_option("--out", rep_out, "Output directory")->capture_default_str();
  rep->add_option("--format", rep_format, "Outputs to write")
      ->check(CLI::IsMember({"structured", "csv", "svg", "all"}))
      ->capture_default_str();

  auto* bins = app.add_subcommand("describe-bins", "Print the bin edges");

  std::vector<std::string> keys;
  std::string keys_file, cache_dir = ".capbias-cache", sidecar_out;
  capbias::ProviderConfig provider;
  auto* fetch = app.add_subcommand("fetch", "Fetch metadata from a remote provider into a sidecar document");
  fetch->add_option("--key", keys, "Image key; repeatable");
  fetch->add_option("--keys-file", keys_file, "File with one image key per line")->check(CLI::ExistingFile);
  fetch->add_option("--endpoint", provider.endpoint_template, "URL template with {key} (and optional {credential})")
      ->required();
  fetch->add_option("--credential-env", provider.credential_env, "Environment variable holding the credential")
      ->capture_default_str();
  fetch->add_option("--rate", provider.max_requests_per_second, "Request ceiling per second")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fetch->add_option("--cache-dir", cache_dir, "Directory for verbatim provider responses")->capture_default_str();
  fetch->add_option("--out", sidecar_out, "Sidecar document to write")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*audit) return run_audit_command(audit_args, false);
    if (*evaluate) return run_audit_command(eval_args, true);
    if (*rep) return run_repeatability(scenarios_path, tolerance, floor, rep_out, rep_format);
    if (*bins) {
      describe_bins(std::cout);
      return 0;
    }
    if (*fetch) {
      if (!keys_file.empty()) {
        std::istringstream lines(capbias::read_file_text(keys_file));
        for (std::string line; std::getline(lines, line);) {
          auto t = capbias::detail::trim(line);
          if (!t.empty()) keys.emplace_back(t);
        }
      }
      capbias::RemoteFetcher fetcher(provider, cache_dir);
      capbias::Warnings warnings;
      const auto records = capbias::fetch_remote_records(fetcher, keys, warnings);
      std::ofstream out(sidecar_out, std::ios::binary | std::ios::trunc);
      out << capbias::sidecar_document(records);
      for (const auto& w : warnings) std::cerr << "warning: " << w.image_id << ": " << w.reason << "\n";
      std::cout << "fetched " << records.size() << " of " << keys.size() << " keys, " << fetcher.network_requests()
                << " network requests\n";
      return 0;
    }
  } catch (const capbias::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
