#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "skex/generate.hpp"
#include "skex/pipeline.hpp"
#include "support.hpp"

using namespace skex;
namespace fs = std::filesystem;

namespace {

// Small images keep the unit suite quick; acceptance runs full size.
Config small_config() {
  Config c;
  c.image_width = c.image_height = 96;
  return c;
}

RunOptions quiet() {
  static std::ostringstream sink;
  RunOptions r;
  r.log = &sink;
  return r;
}

void write_sequences(const fs::path& dir, std::uint64_t seed, std::size_t n) {
  fs::create_directories(dir);
  SequenceGenerator gen(seed);
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "m%03zu.json", i);
    test::write_file(dir / name, serialize_json(gen()));
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

int token_of(double v) { return static_cast<int>(std::floor(v * 255.0 + 0.5)); }

}  // namespace

TEST(Digest, KnownVector) {
  EXPECT_EQ(hex(sha256("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(hex(sha256("")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Config, DefaultsRoundTrip) {
  const Config c;
  const auto j = c.to_json();
  EXPECT_EQ(j["views"], 36);
  EXPECT_EQ(j["bind_eps"], 4.0);
  EXPECT_EQ(j["param_tolerance"], 3);
  EXPECT_EQ(j["loss_lambda"], 2.0);
  EXPECT_EQ(j["n_max"], 60);
  EXPECT_EQ(j["quant_levels"], 256);
  EXPECT_EQ(j["edge_low"], 0.05);
  EXPECT_EQ(j["edge_high"], 0.15);
  EXPECT_EQ(j["blur_sigma"], 1.4);
  EXPECT_EQ(Config::from_json(nlohmann::json::parse(j.dump())).to_json(), j);
}

TEST(Config, Overrides) {
  const Config c = Config::from_json(nlohmann::json::parse(R"({"seed": 7, "views": 12, "bind_eps": 9})"));
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.views, 12u);
  EXPECT_EQ(c.bind_eps, 9.0);
  EXPECT_EQ(c.cameras().size(), 12u);
}

TEST(Config, Strict) {
  auto parse = [](const char* s) { return Config::from_json(nlohmann::json::parse(s)); };
  EXPECT_THROW(parse(R"({"sead": 1})"), SchemaError);
  EXPECT_THROW(parse(R"({"seed": {"a": 1}})"), SchemaError);
  EXPECT_THROW(parse(R"({"seed": "x"})"), SchemaError);
  EXPECT_THROW(parse(R"({"n_max": 30})"), SchemaError);
  EXPECT_THROW(parse(R"({"cd_distance": "l1"})"), SchemaError);
  EXPECT_THROW(parse("[1]"), SchemaError);
  const auto dir = test::scratch_dir("config");
  test::write_file(dir / "bad.json", "{");
  EXPECT_THROW(Config::load(dir / "bad.json"), SchemaError);
  EXPECT_THROW(Config::load(dir / "missing.json"), IoError);
}

TEST(Dedup, IdenticalSequences) {
  const auto a = test::box();
  const auto r = dedup({a, a, test::cylinder(), a});
  EXPECT_EQ(r.kept.size(), 2u);
  EXPECT_EQ(r.duplicates, 2u);
  EXPECT_EQ(r.kept_indices, (std::vector<std::size_t>{0, 2}));
}

TEST(Dedup, SubQuantizationCollapse) {
  const double g = 1.0 / 255;
  const auto base = test::box({50 * g, 50 * g, 50 * g}, 100 * g, 80 * g);
  // Values on the grid shifted by less than half a bin keep their tokens.
  auto shifted = [&](double d) {
    CadSequence s = base;
    auto& v = s.commands[5].params;
    v[8] += d;   // px
    v[11] += d;  // s
    v[12] -= d;  // e1
    return s;
  };
  const double near = 0.3 / 255, far = 0.7 / 255;
  const auto& v0 = base.commands[5].params;
  EXPECT_EQ(token_of(v0[8] + near), token_of(v0[8]));
  EXPECT_EQ(token_of(v0[11] + near), token_of(v0[11]));
  EXPECT_EQ(token_of(v0[12] - near), token_of(v0[12]));
  EXPECT_NE(token_of(v0[8] + far), token_of(v0[8]));
  EXPECT_EQ(dedup({base, shifted(near)}).kept.size(), 1u);
  EXPECT_EQ(dedup({base, shifted(far)}).kept.size(), 2u);
}

TEST(Dedup, InvalidRemovedAndIdempotent) {
  CadSequence open;
  open.commands = {Command::sol(), Command::line(1, 0), Command::line(1, 1),
                   Command::extrude(test::axis_extrude({0, 0, 0}, 1, 0.5)), Command::eos()};
  SequenceGenerator gen(31);
  std::vector<CadSequence> batch;
  for (int i = 0; i < 20; ++i) {
    batch.push_back(gen());
    if (i % 4 == 0) batch.push_back(batch.back());
  }
  batch.insert(batch.begin() + 3, open);
  const auto r = dedup(batch);
  EXPECT_EQ(r.invalid, 1u);
  EXPECT_EQ(r.duplicates, 5u);
  EXPECT_EQ(r.kept.size(), 20u);
  const auto again = dedup(r.kept);
  EXPECT_EQ(again.kept.size(), r.kept.size());
  EXPECT_EQ(again.digests, r.digests);
  EXPECT_EQ(again.invalid + again.duplicates, 0u);
}

TEST(Split, RatiosAndStability) {
  std::size_t counts[3] = {0, 0, 0};
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const std::string d = hex(sha256(std::to_string(i)));
    const Split s = assign_split(d);
    EXPECT_EQ(s, assign_split(d));
    ++counts[static_cast<int>(s)];
  }
  EXPECT_NEAR(counts[0] / double(n), 0.90, 0.01);
  EXPECT_NEAR(counts[1] / double(n), 0.05, 0.01);
  EXPECT_NEAR(counts[2] / double(n), 0.05, 0.01);
  EXPECT_EQ(to_string(Split::Validation), "val");
}

TEST(ParallelFor, CoversAndRethrows) {
  std::vector<int> hit(100, 0);
  parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 100);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 5) throw RangeError("boom");
               }),
               RangeError);
}

TEST(Dataset, OneModelThirtySixViews) {
  const auto root = test::scratch_dir("ds_one");
  fs::create_directories(root / "in");
  test::write_file(root / "in" / "cube.json", serialize_json(test::box()));
  const auto man = dataset_build(root / "in", root / "out", small_config(), quiet());
  ASSERT_EQ(man.models.size(), 1u);
  const fs::path dir = root / "out" / "models" / "cube";
  std::map<std::string, int> kinds;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    const auto dot = name.find('.');
    kinds[name.substr(dot + 1)]++;
  }
  EXPECT_EQ(kinds["render.png"], 36);
  EXPECT_EQ(kinds["edges.png"], 36);
  EXPECT_EQ(kinds["proposals.json"], 36);
  EXPECT_EQ(kinds["camera.json"], 36);
  EXPECT_EQ(kinds["json"], 1);  // sequence.json
  EXPECT_TRUE(verify_manifest(root / "out").empty());

  const auto doc = nlohmann::json::parse(slurp(root / "out" / "manifest.json"));
  EXPECT_EQ(doc["counts"]["models"], 1);
  EXPECT_EQ(doc["counts"]["views_per_model"], 36);
  EXPECT_EQ(doc["models"][0]["views"].size(), 36u);
  EXPECT_EQ(doc["config"]["views"], 36);
  EXPECT_EQ(doc["tool_version"], kToolVersion);
  EXPECT_EQ(doc["files"].size(), 1u + 4 * 36);

  // Sidecar cameras match the ring, and the render is a valid image.
  const auto cam = nlohmann::json::parse(slurp(dir / "view_07.camera.json"));
  const Camera expect = small_config().cameras()[7];
  EXPECT_NEAR(cam["eye"][0].get<double>(), expect.eye.x, 1e-12);
  EXPECT_EQ(read_image(dir / "view_07.render.png").width, 96);

  // Tampering is detected.
  test::write_file(dir / "view_03.edges.png", "x");
  EXPECT_EQ(verify_manifest(root / "out").size(), 1u);
}

TEST(Dataset, DeterministicRebuild) {
  const auto root = test::scratch_dir("ds_det");
  write_sequences(root / "in", 4, 3);
  Config cfg = small_config();
  cfg.views = 6;
  cfg.elevations_deg = {30};
  cfg.seed = 12;
  dataset_build(root / "in", root / "a", cfg, quiet());
  RunOptions threaded = quiet();
  threaded.threads = 3;
  dataset_build(root / "in", root / "b", cfg, threaded);
  EXPECT_EQ(slurp(root / "a" / "manifest.json"), slurp(root / "b" / "manifest.json"));
  const auto doc = nlohmann::json::parse(slurp(root / "a" / "manifest.json"));
  for (const auto& [path, _] : doc["files"].items()) EXPECT_EQ(slurp(root / "a" / path), slurp(root / "b" / path)) << path;
  EXPECT_TRUE(verify_manifest(root / "b").empty());
}

TEST(Dataset, CountsFailures) {
  const auto root = test::scratch_dir("ds_fail");
  write_sequences(root / "in", 5, 2);
  test::write_file(root / "in" / "broken.json", "{not json");
  test::write_file(root / "in" / "dup.json", slurp(root / "in" / "m000.json"));
  CadSequence open;
  open.commands = {Command::sol(), Command::line(1, 0), Command::line(1, 1),
                   Command::extrude(test::axis_extrude({0, 0, 0}, 1, 0.5)), Command::eos()};
  test::write_file(root / "in" / "open.json", serialize_json(open));
  Config cfg = small_config();
  cfg.views = 3;
  cfg.elevations_deg = {30};
  const auto man = dataset_build(root / "in", root / "out", cfg, quiet());
  EXPECT_EQ(man.inputs, 5u);
  EXPECT_EQ(man.parse_failures, 1u);
  EXPECT_EQ(man.invalid_removed, 1u);
  EXPECT_EQ(man.duplicates_removed, 1u);
  EXPECT_EQ(man.models.size(), 2u);
  EXPECT_EQ(man.skipped, 0u);
  EXPECT_THROW(dataset_build(root / "nope", root / "out2", cfg, quiet()), IoError);
}

TEST(Eval, SelfComparisonIsPerfect) {
  const auto root = test::scratch_dir("eval_self");
  write_sequences(root / "gt", 8, 10);
  const Config cfg;
  const MetricReport r = eval_run(root / "gt", root / "gt", cfg, quiet());
  EXPECT_EQ(r.cmd_acc, 1.0);
  EXPECT_EQ(r.param_acc, 1.0);
  EXPECT_EQ(r.invalid_ratio, 0.0);
  ASSERT_TRUE(r.cd.has_value());
  EXPECT_LT(*r.cd, 1e-6);
  EXPECT_EQ(r.sequences, 10u);
  EXPECT_EQ(r.valid_pairs, 10u);
  EXPECT_EQ(to_json(r)["config"], cfg.to_json());
}

TEST(Eval, OneCorruptedPrediction) {
  const auto root = test::scratch_dir("eval_corrupt");
  write_sequences(root / "gt", 9, 10);
  fs::create_directories(root / "pred");
  std::vector<double> per_pair;
  Config cfg;
  cfg.seed = 3;
  SequenceGenerator other(77);
  for (const auto& e : fs::directory_iterator(root / "gt")) {
    const std::string id = e.path().stem().string();
    if (id == "m004") {
      test::write_file(root / "pred" / "m004.json", "{\"commands\": [");
      continue;
    }
    // Predictions: unrelated valid sequences, half stored as tokens.
    const CadSequence p = other();
    if (id < "m004") {
      test::write_file(root / "pred" / (id + ".json"), serialize_json(p));
    } else {
      std::ofstream os(root / "pred" / (id + ".tok"), std::ios::binary);
      write_tokens(os, quantize(p));
    }
  }
  for (const auto& e : fs::directory_iterator(root / "gt")) {
    const std::string id = e.path().stem().string();
    if (id == "m004") continue;
    const fs::path pf = fs::exists(root / "pred" / (id + ".json")) ? root / "pred" / (id + ".json")
                                                                     : root / "pred" / (id + ".tok");
    const PairOutcome o = evaluate_pair(id, pf, e.path(), cfg);
    ASSERT_TRUE(o.cd.has_value()) << id;
    per_pair.push_back(*o.cd);
  }
  const MetricReport r = eval_run(root / "pred", root / "gt", cfg, quiet());
  EXPECT_DOUBLE_EQ(r.invalid_ratio, 0.1);
  EXPECT_EQ(r.valid_pairs, 9u);
  double mean = 0;
  for (double v : per_pair) mean += v;
  mean /= static_cast<double>(per_pair.size());
  ASSERT_TRUE(r.cd.has_value());
  EXPECT_NEAR(*r.cd, mean, 1e-12);
  EXPECT_LT(r.cmd_acc, 1.0);
  EXPECT_TRUE(r.errors.empty());
}

TEST(Eval, OrphansRaise) {
  const auto root = test::scratch_dir("eval_orphan");
  write_sequences(root / "gt", 10, 3);
  write_sequences(root / "pred", 10, 2);
  try {
    eval_run(root / "pred", root / "gt", Config{}, quiet());
    FAIL() << "expected PairingError";
  } catch (const PairingError& e) {
    EXPECT_NE(std::string(e.what()).find("m002"), std::string::npos);
  }
}

TEST(Eval, DatasetDirectoryAsInput) {
  const auto root = test::scratch_dir("eval_ds");
  write_sequences(root / "in", 13, 3);
  Config cfg = small_config();
  cfg.views = 3;
  cfg.elevations_deg = {30};
  dataset_build(root / "in", root / "ds", cfg, quiet());
  const MetricReport r = eval_run(root / "ds", root / "in", Config{}, quiet());
  EXPECT_EQ(r.sequences, 3u);
  EXPECT_EQ(r.cmd_acc, 1.0);
}
