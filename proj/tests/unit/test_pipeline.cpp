#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "waswhistle/io.hpp"
#include "waswhistle/pipeline.hpp"
#include "waswhistle/plot.hpp"

using namespace waswhistle;
using namespace waswhistle::pipeline;
namespace fs = std::filesystem;

namespace {

ExperimentConfig micro_config(const std::string& tag) {
    ExperimentConfig e;
    e.subset_sizes = {8};
    e.repeats = 1;
    e.generated_per_real = 2;
    e.eval_recordings = 1;
    e.eval_frames = 128;
    e.seed = 77;

    e.noise_gan.g_base = 4;
    e.noise_gan.d_base = 4;
    e.noise_gan.batch = 4;
    e.noise_gan.d_steps_per_g_step = 1;
    e.noise_gan.iterations = 2;
    e.contour_gan = e.noise_gan;

    e.fusion.g_base = 4;
    e.fusion.d_base = 4;
    e.fusion.batch = 2;
    e.fusion.iterations = 2;
    e.fusion.pool = 8;

    e.extractor.width = 4;
    e.extractor.batch = 4;
    e.extractor.iterations = 6;
    e.extractor.decay_every = 1000;

    e.thresholds.enabled = false; // untrained models produce diffuse masks

    e.out_dir = (fs::temp_directory_path() / ("wp_" + tag)).string();
    e.cache_dir = e.out_dir + "/cache";
    fs::remove_all(e.out_dir);
    return e;
}

} // namespace

TEST_CASE("ablation switch sets parse and render consistently") {
    CHECK(AblationSwitches::parse("full").tag() == "full");
    CHECK(AblationSwitches::parse("-residual").tag() == "-residual");
    CHECK(AblationSwitches::parse("-abn-select").tag() == "-select-abn");
    CHECK(AblationSwitches::parse("-residual,-select,-abn").tag() == "-residual-select-abn");
    CHECK(AblationSwitches::parse("single_gan").tag() == "single_gan");
    CHECK(AblationSwitches::parse("random_addition").tag() == "random_addition");
    CHECK(AblationSwitches::parse("random_addition_blur").tag() == "random_addition_blur");
    auto sw = AblationSwitches::parse("-select");
    CHECK(sw.residual);
    CHECK_FALSE(sw.select);
    CHECK(sw.abn);
    CHECK_THROWS_AS(AblationSwitches::parse("-warp"), PipelineError);
    CHECK_THROWS_AS(AblationSwitches::parse("teleport"), PipelineError);
    CHECK_THROWS_AS(AblationSwitches::parse("single_gan,random_addition"), PipelineError);
    CHECK_THROWS_AS(AblationSwitches::parse("single_gan,-abn"), PipelineError);
}

TEST_CASE("experiment config round-trips through its text form") {
    ExperimentConfig e = desk_preset();
    e.subset_sizes = {200, 500, 2000};
    e.repeats = 3;
    e.augment = true;
    e.seed = 1234;
    e.synth.snr_min_db = 7.5;
    e.noise_gan.iterations = 77;
    e.fusion.lambda_cycle = 12.5f;
    e.extractor.width = 24;
    e.thresholds.support_min = 80;
    e.validate();

    Config c = e.to_config();
    ExperimentConfig back = ExperimentConfig::from_config(c);
    CHECK(back.to_config().text() == c.text());
    CHECK(back.subset_sizes == e.subset_sizes);
    CHECK(back.repeats == 3);
    CHECK(back.augment);
    CHECK(back.seed == 1234);
    CHECK(back.synth.snr_min_db == doctest::Approx(7.5));
    CHECK(back.noise_gan.iterations == 77);
    CHECK(back.fusion.lambda_cycle == doctest::Approx(12.5));
    CHECK(back.extractor.width == 24);
    CHECK(back.thresholds.support_min == 80);
}

TEST_CASE("experiment config validation rejects bad sweeps") {
    ExperimentConfig e = desk_preset();
    e.subset_sizes = {500, 200};
    CHECK_THROWS_AS(e.validate(), PipelineError);
    e.subset_sizes = {200, 200};
    CHECK_THROWS_AS(e.validate(), PipelineError);
    e.subset_sizes = {};
    CHECK_THROWS_AS(e.validate(), PipelineError);
    e = desk_preset();
    e.repeats = 0;
    CHECK_THROWS_AS(e.validate(), PipelineError);
    desk_preset().validate(); // the preset itself is sound
}

TEST_CASE("a baseline sweep cell runs, logs, and resumes from the cache") {
    ExperimentConfig e = micro_config("base");
    auto records = run_sweep(e);
    REQUIRE(records.size() == 1);
    const RunRecord& r = records[0];
    CHECK(r.variant == "baseline");
    CHECK(r.n_pos == 8);
    CHECK(r.error.empty());
    REQUIRE(r.artifacts.size() == 1);
    CHECK(r.artifacts[0].first == "extractor");
    CHECK(fs::exists(e.out_dir + "/runs.tsv"));
    CHECK(!r.stage_seconds.empty());

    // the trained stage landed in the cache; rerunning loads instead of training
    size_t cached = 0;
    for (auto& p : fs::directory_iterator(e.cache_dir)) (void)p, ++cached;
    CHECK(cached == 1);
    auto again = run_sweep(e);
    REQUIRE(again.size() == 1);
    CHECK(again[0].artifacts == r.artifacts);
    CHECK(again[0].report.tsv() == r.report.tsv());
    CHECK(again[0].config_digest == r.config_digest);

    // the ledger appended both runs under one header
    std::ifstream is(e.out_dir + "/runs.tsv");
    std::string line;
    int lines = 0;
    while (std::getline(is, line)) ++lines;
    CHECK(lines == 3);
    fs::remove_all(e.out_dir);
}

TEST_CASE("an augmented cell exercises all stages and ablations rewire them") {
    ExperimentConfig e = micro_config("aug");
    RunRecord full = run_cell(e, 8, 0, true, AblationSwitches{});
    CHECK(full.error.empty());
    std::vector<std::string> stages;
    for (auto& [s, d] : full.artifacts) stages.push_back(s);
    CHECK(stages == std::vector<std::string>{"extractor", "noise-gan", "contour-gan", "fusion",
                                             "extractor-aug"});

    // removal switches change the cell digest and still complete
    RunRecord noabn = run_cell(e, 8, 0, true, AblationSwitches::parse("-abn"));
    CHECK(noabn.error.empty());
    CHECK(noabn.variant == "-abn");
    // the staged models are shared with the full run via the cache
    CHECK(noabn.artifacts[1] == full.artifacts[1]);
    CHECK(noabn.artifacts[3] == full.artifacts[3]);
    CHECK(noabn.artifacts[4] != full.artifacts[4]);

    RunRecord nores = run_cell(e, 8, 0, true, AblationSwitches::parse("-residual"));
    CHECK(nores.error.empty());
    CHECK(nores.artifacts[3] != full.artifacts[3]); // different fusion model

    RunRecord radd = run_cell(e, 8, 0, true, AblationSwitches::parse("random_addition_blur"));
    CHECK(radd.error.empty());
    std::vector<std::string> radd_stages;
    for (auto& [s, d] : radd.artifacts) radd_stages.push_back(s);
    CHECK(radd_stages == std::vector<std::string>{"extractor", "noise-gan", "contour-gan",
                                                  "extractor-aug"});

    RunRecord sgan = run_cell(e, 8, 0, true, AblationSwitches::parse("single_gan"));
    CHECK(sgan.error.empty());
    CHECK(sgan.artifacts[1].first == "single-gan");

    CHECK_THROWS_AS(run_ablation(e, "nonsense"), PipelineError);
    fs::remove_all(e.out_dir);
}

TEST_CASE("sweep records turn into curve and mosaic images") {
    std::vector<RunRecord> records;
    for (int n : {200, 500}) {
        for (const char* v : {"baseline", "augmented"}) {
            RunRecord r;
            r.variant = v;
            r.n_pos = n;
            r.report.mean_f1 = n / 1000.0 + (v[0] == 'a' ? 0.1 : 0.0);
            r.report.ods = r.report.mean_f1 + 0.05;
            records.push_back(r);
        }
    }
    std::string dir = (fs::temp_directory_path() / "wp_plot").string();
    fs::remove_all(dir);
    auto files = plot::plot_report(records, dir);
    REQUIRE(files.size() == 2);
    for (const auto& f : files) {
        std::ifstream is(f, std::ios::binary);
        std::string magic(2, '\0');
        is.read(magic.data(), 2);
        CHECK(magic == "P6");
    }

    std::vector<Grid> tiles(5, Grid(64, 64, 0.5f));
    Grid mosaic = plot::render_mosaic(tiles, 3);
    CHECK(mosaic.rows == 2 * 65 - 1);
    CHECK(mosaic.cols == 3 * 65 - 1);
    CHECK(mosaic.at(0, 64) == 1.f);  // separator
    CHECK(mosaic.at(0, 63) == 0.5f); // tile interior
    plot::write_pgm(dir + "/m.pgm", mosaic);
    std::ifstream is(dir + "/m.pgm", std::ios::binary);
    std::string magic(2, '\0');
    is.read(magic.data(), 2);
    CHECK(magic == "P5");
    CHECK_THROWS_AS(plot::render_mosaic({}, 4), plot::PlotError);
    CHECK_THROWS_AS(plot::plot_report({}, dir), plot::PlotError);
    fs::remove_all(dir);
}
