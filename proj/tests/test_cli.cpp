#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "specadv/metrics.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kBin = SPECADV_BIN;

int run_cli(const std::string& args) {
    const std::string cmd = kBin + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

fs::path work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "specadv_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("argument errors exit with the usage code") {
    CHECK(run_cli("") == 2);                      // a subcommand is required
    CHECK(run_cli("frobnicate") == 2);            // unknown subcommand
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("train --variant banana --out /tmp/x") == 2);
    CHECK(run_cli("attack") == 2);                // --model is required
}

TEST_CASE("missing inputs exit with the io code") {
    CHECK(run_cli("attack --model " + q(work_dir() / "no_such_model") + " --out " +
                  q(work_dir() / "a")) == 4);
    CHECK(run_cli("listen-export --result " + q(work_dir() / "no_such_bundle") + " --out " +
                  q(work_dir() / "b")) == 4);
    CHECK(run_cli("report --in " + q(work_dir() / "no_such.csv") + " --out " +
                  q(work_dir() / "x.json")) == 4);
}

TEST_CASE("train, attack, ablate, listen-export and report compose") {
    const fs::path dir = work_dir();
    const fs::path model = dir / "m_direct";

    CHECK(run_cli("train --variant direct --out " + q(model) +
                  " --utterances 2 --epochs 3 --duration 1.0 --seed 3") == 0);
    CHECK(fs::exists(model.string() + ".json"));
    CHECK(fs::exists(model.string() + ".bin"));
    CHECK(fs::exists(model.string() + ".trace.json"));
    CHECK(fs::exists(model.string() + ".cfg"));

    const fs::path attack_out = dir / "attack";
    CHECK(run_cli("attack --model " + q(model) + " --out " + q(attack_out) +
                  " --pairs 1 --pool 2 --duration 1.0 --k 2 --epsilon 10 --seed 1") == 0);
    for (const char* suffix :
         {"pair0.json", "pair0.bin", "pair0_metrics.json", "pair0_mixture.wav",
          "pair0_attacked.wav", "pair0_enhanced_clean.wav", "pair0_enhanced_attacked.wav",
          "pair0_delta.wav", "resolved.cfg"})
        CHECK(fs::exists(attack_out / suffix));

    const fs::path listen_out = dir / "listen";
    CHECK(run_cli("listen-export --result " + q(attack_out / "pair0") + " --out " +
                  q(listen_out)) == 0);
    CHECK(slurp(listen_out / "pair0_attacked.wav") == slurp(attack_out / "pair0_attacked.wav"));

    const fs::path ab1 = dir / "ab1";
    const std::string grid_args = " --pairs 2 --pool 2 --duration 1.0 --k 2"
                                  " --lambdas 0 20 --epsilons 2 inf --modes fixed --seed 1";
    CHECK(run_cli("ablate --models " + q(model) + " --out " + q(ab1) + grid_args) == 0);
    CHECK(fs::exists(ab1 / "report.csv"));
    CHECK(fs::exists(ab1 / "report.json"));
    CHECK(fs::exists(ab1 / "progress.json"));

    const std::vector<specadv::MetricRow> table = specadv::read_report((ab1 / "report.csv").string());
    CHECK(table.size() == 2 * 2 * 2);

    // a fresh run is byte-identical
    const fs::path ab2 = dir / "ab2";
    CHECK(run_cli("ablate --models " + q(model) + " --out " + q(ab2) + grid_args) == 0);
    CHECK(slurp(ab1 / "report.csv") == slurp(ab2 / "report.csv"));
    CHECK(slurp(ab1 / "report.json") == slurp(ab2 / "report.json"));

    // resuming over the finished progress file recomputes nothing and agrees
    CHECK(run_cli("ablate --models " + q(model) + " --out " + q(ab2) + grid_args +
                  " --resume") == 0);
    CHECK(slurp(ab1 / "report.csv") == slurp(ab2 / "report.csv"));

    // report format conversion round-trips
    const fs::path conv = dir / "conv.json";
    CHECK(run_cli("report --in " + q(ab1 / "report.csv") + " --out " + q(conv)) == 0);
    const fs::path back = dir / "back.csv";
    CHECK(run_cli("report --in " + q(conv) + " --out " + q(back)) == 0);
    CHECK(slurp(ab1 / "report.csv") == slurp(back));
}

TEST_CASE("diffusion training writes a loadable bundle") {
    const fs::path dir = work_dir();
    const fs::path model = dir / "m_diff";
    CHECK(run_cli("train --variant diffusion --out " + q(model) +
                  " --utterances 2 --score-steps 5 --duration 1.0 --steps 4 --seed 2") == 0);
    const specadv::Model m = specadv::load_model(model.string());
    CHECK(m.kind == "diffusion");
    CHECK(m.sde.n_steps == 4);
    CHECK(m.score.data_scale > 0.0);
}
