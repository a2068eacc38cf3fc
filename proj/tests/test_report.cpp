#include <regex>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "capbias/report.hpp"
#include "fixtures.hpp"

using namespace capbias;
using capbias::testing::fixture;

namespace {

AuditConfig corpus12(bool with_detections) {
  AuditConfig c;
  c.annotations = fixture("corpus12/annotations.json");
  c.exif_sidecars = {fixture("corpus12/sidecar.json")};
  c.images_dir = fixture("corpus12/images");
  if (with_detections) c.detections = fixture("corpus12/detections.json");
  return c;
}

std::string doc_named(const std::vector<OutputDocument>& docs, const std::string& name) {
  for (const auto& d : docs)
    if (d.name == name) return d.content;
  ADD_FAILURE() << "missing " << name;
  return {};
}

int count_matches(const std::string& s, const std::regex& re) {
  return static_cast<int>(std::distance(std::sregex_iterator(s.begin(), s.end(), re), std::sregex_iterator()));
}

}  // namespace

TEST(RunAudit, Corpus12GridMatchesHandPlacement) {
  const auto r = run_audit(corpus12(false));
  GridCells want{};
  want[0] = {1, 2, 2, 1, 1, 0, 0, 0};
  want[1][1] = 1;
  want[1][5] = 1;
  want[4][6] = 1;
  want[7][7] = 1;
  EXPECT_EQ(r.counts.cells, want);
  EXPECT_EQ(r.counts.total_assigned, 11u);
  EXPECT_EQ(r.counts.skipped_count, 1u);
  EXPECT_EQ(r.counts.clamped_iso_count, 1u);
  EXPECT_EQ(r.image_count, 12u);
  EXPECT_EQ(r.complete_count, 11u);
  EXPECT_EQ(r.partial_count, 1u);
  EXPECT_DOUBLE_EQ(r.coverage, 11.0 / 12.0);
  EXPECT_EQ(r.illumination.high, 4u);
  EXPECT_EQ(r.illumination.mid, 1u);
  EXPECT_EQ(r.illumination.low, 6u);
  EXPECT_EQ(r.illumination.split, "annotations");
  EXPECT_FALSE(r.bin_map);
  EXPECT_EQ(r.inputs.size(), 3u);
}

TEST(RunAudit, IlluminationTableEqualsClassifierSums) {
  const auto cfg = corpus12(false);
  const auto r = run_audit(cfg);
  Warnings w;
  auto ann = load_annotations(read_file_text(cfg.annotations));
  auto joined = join_metadata(ann.manifest, {RecordSource{"s", parse_sidecar(read_file_text(cfg.exif_sidecars[0]), w)},
                                             ImageDirSource{*cfg.images_dir}});
  std::array<std::uint64_t, 3> by_class{};
  for (const auto& p : joined.profiles)
    if (p) ++by_class[static_cast<int>(classify_illumination(p->ev))];
  EXPECT_EQ(r.illumination.low, by_class[0]);
  EXPECT_EQ(r.illumination.mid, by_class[1]);
  EXPECT_EQ(r.illumination.high, by_class[2]);
  const double total = *r.illumination.percent(Illumination::High) + *r.illumination.percent(Illumination::Mid) +
                       *r.illumination.percent(Illumination::Low);
  EXPECT_NEAR(total, 100.0, 0.1);
}

TEST(RunAudit, DeterministicAndThreadIndependent) {
  auto cfg = corpus12(true);
  const auto a = serialize_report(run_audit(cfg));
  EXPECT_EQ(a, serialize_report(run_audit(cfg)));
  cfg.threads = 4;
  EXPECT_EQ(a, serialize_report(run_audit(cfg)));
}

TEST(RunAudit, WithoutDetectionsEvaluationIsNull) {
  const auto j = to_json(run_audit(corpus12(false)));
  EXPECT_TRUE(j["evaluation"].is_null());
  EXPECT_EQ(j["schema_version"], kReportSchemaVersion);
  EXPECT_EQ(j["tool"]["version"], kVersion);
  EXPECT_EQ(j["grids"]["count"]["total_assigned"], 11);
  EXPECT_EQ(j["coverage"]["no_exif"], 0);
}

TEST(RunAudit, WithDetectionsFillsEvaluation) {
  const auto r = run_audit(corpus12(true));
  ASSERT_TRUE(r.bin_map);
  ASSERT_TRUE(r.global_map && r.global_map->map);
  EXPECT_EQ(r.bin_map->excluded_images, 1u);
  EXPECT_EQ(r.global_map->per_category.size(), 3u);
  for (int row = 0; row < kGridSize; ++row)
    for (int col = 0; col < kGridSize; ++col)
      EXPECT_EQ(r.bin_map->map[row][col].has_value(), r.bin_map->annotation_counts[row][col] > 0);
}

TEST(RunAudit, MissingInputIsFatal) {
  AuditConfig c;
  c.annotations = fixture("corpus12/nope.json");
  try {
    run_audit(c);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(IlluminationCsv, CountPercentLayout) {
  IlluminationTable t{"train", 61, 27, 12, 0};
  const auto csv = illumination_csv(t);
  EXPECT_EQ(csv,
            "split,high,high_pct,mid,mid_pct,low,low_pct,profiled,below_ev_floor\r\n"
            "train,61,61%,27,27%,12,12%,100,0\r\n");
}

TEST(IlluminationCsv, ZeroProfiledOmitsPercentages) {
  IlluminationTable t{"val", 0, 0, 0, 0};
  EXPECT_EQ(illumination_csv(t).substr(illumination_csv(t).find("\r\n") + 2), "val,0,,0,,0,,0,0\r\n");
}

TEST(Csv, QuotesPerRfcRules) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("dog, small"), "\"dog, small\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_field("two\nlines"), "\"two\nlines\"");
  EXPECT_EQ(csv_row({"a", "b,c"}), "a,\"b,c\"\r\n");
}

TEST(EmitTables, CsvSetAndQuotedCategory) {
  const auto docs = emit_tables(run_audit(corpus12(true)), TableFormat::Csv);
  for (const char* name : {"illumination.csv", "count_grid.csv", "percent_grid.csv", "marginals.csv", "warnings.csv",
                           "bin_map.csv", "category_ap.csv"}) {
    EXPECT_FALSE(doc_named(docs, name).empty()) << name;
  }
  EXPECT_NE(doc_named(docs, "category_ap.csv").find("\"dog, small\""), std::string::npos);
  EXPECT_NE(doc_named(docs, "count_grid.csv").find("exposure_bin,\"iso [0, 100)\""), std::string::npos);
}

TEST(EmitTables, StructuredIsVersionedJson) {
  const auto docs = emit_tables(run_audit(corpus12(false)), TableFormat::Structured);
  ASSERT_EQ(docs.size(), 1u);
  EXPECT_EQ(docs[0].name, "report.json");
  EXPECT_EQ(nlohmann::json::parse(docs[0].content)["schema_version"], kReportSchemaVersion);
}

TEST(RenderHeatmap, PointMassIsOneSaturatedCellTopLeftOrientation) {
  std::vector<ExifRecord> r(4);
  for (auto& x : r) x.exposure_time_s = 0.01, x.iso = 150;
  const auto svg = render_heatmap(accumulate_grid(r, GridKind::Percent), HeatmapStyle{});
  EXPECT_EQ(count_matches(svg, std::regex("fill=\"#08306b\"")), 1);
  EXPECT_EQ(count_matches(svg, std::regex(R"re(<rect [^>]*data-row="0" data-col="1" data-value="100.00" fill="#08306b")re")), 1);
  // Cell (0,0) sits at the top-left of the cell block.
  std::smatch m00, m10;
  ASSERT_TRUE(std::regex_search(svg, m00, std::regex(R"re(<rect x="(\d+)" y="(\d+)"[^>]*data-row="0" data-col="0")re")));
  ASSERT_TRUE(std::regex_search(svg, m10, std::regex(R"re(<rect x="(\d+)" y="(\d+)"[^>]*data-row="1" data-col="0")re")));
  EXPECT_EQ(m00[1], m10[1]);
  EXPECT_LT(std::stoi(m00[2]), std::stoi(m10[2]));
}

TEST(RenderHeatmap, UndefinedCellsHatchedWithLegend) {
  ScoreCells cells{};
  for (auto& row : cells)
    for (auto& v : row) v = 0.5;
  cells[2][3].reset();
  const auto svg = render_heatmap(cells, HeatmapStyle{});
  EXPECT_EQ(count_matches(svg, std::regex(R"re(data-row="2" data-col="3" class="undefined" fill="url\(#hatch\)")re")), 1);
  EXPECT_EQ(count_matches(svg, std::regex("class=\"undefined\"")), 1);
  EXPECT_NE(svg.find("no ground truth"), std::string::npos);

  cells[2][3] = 0.5;
  EXPECT_EQ(render_heatmap(cells, HeatmapStyle{}).find("no ground truth"), std::string::npos);
}

TEST(RenderHeatmap, Deterministic) {
  const auto r = run_audit(corpus12(true));
  EXPECT_EQ(emit_heatmaps(r), emit_heatmaps(r));
  EXPECT_EQ(emit_heatmaps(r).size(), 3u);
}

TEST(RenderHeatmap, LegendPrintsRange) {
  ScoreCells cells{};
  cells[0][0] = 0.25;
  cells[7][7] = 0.75;
  const auto svg = render_heatmap(cells, HeatmapStyle{});
  EXPECT_NE(svg.find(">min 0.25<"), std::string::npos);
  EXPECT_NE(svg.find(">max 0.75<"), std::string::npos);
}
