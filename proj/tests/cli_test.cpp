#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "frnn/data.hpp"
#include "frnn/training.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code;
    std::string output;
};

const char* kTinyConfig = R"(
topology.image_channels = 1
topology.image_height = 16
topology.image_width = 16
topology.pre_convs = 4:3
topology.bgru = 6:3:p,8:3
train.g = 2
train.p = 2
train.batch_size = 2
train.steps = 3
train.seed = 5
train.learning_rate = 0.001
data.canvas_height = 16
data.canvas_width = 16
data.frames = 8
data.sprite_size = 5
data.seed = 7
eval.g = 2
eval.p = 2
)";

class CliFixture {
public:
    CliFixture() {
        dir_ = fs::temp_directory_path() / ("frnn_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir_);
        std::ofstream(dir_ / "tiny.cfg") << kTinyConfig;
    }
    ~CliFixture() { fs::remove_all(dir_); }

    const fs::path& dir() const { return dir_; }
    std::string path(const char* name) const { return (dir_ / name).string(); }

    RunResult run(const std::string& args, const std::string& env = "") const {
        const std::string out_file = (dir_ / "last_output.txt").string();
        std::string cmd = env.empty() ? "" : env + " ";
        cmd += std::string(FRNN_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
        const int status = std::system(cmd.c_str());
        RunResult r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        std::ifstream is(out_file);
        std::ostringstream ss;
        ss << is.rdbuf();
        r.output = ss.str();
        return r;
    }

    std::string slurp(const std::string& p) const {
        std::ifstream is(p, std::ios::binary);
        std::ostringstream ss;
        ss << is.rdbuf();
        return ss.str();
    }

private:
    fs::path dir_;
};

}  // namespace

TEST_CASE("cli workflows") {
    CliFixture cli;
    const std::string cfg = cli.path("tiny.cfg");

    SECTION("usage errors exit with code 2") {
        REQUIRE(cli.run("no-such-command").code == 2);
        REQUIRE(cli.run("gen-data --count 1").code == 2);  // missing --out
        REQUIRE(cli.run("").code == 2);
    }

    SECTION("runtime errors exit with code 1") {
        auto r = cli.run("predict --checkpoint missing.ck --data missing.seq --out x.seq");
        REQUIRE(r.code == 1);
        REQUIRE(r.output.find("error:") != std::string::npos);
    }

    SECTION("gen-data defaults give [count 20 1 32 32] and seeded determinism") {
        auto r = cli.run("gen-data --count 4 --out " + cli.path("a.seq") + " --seed 3");
        REQUIRE(r.code == 0);
        REQUIRE(r.output.find("[4 20 1 32 32]") != std::string::npos);
        auto batch = frnn::read_seq(cli.path("a.seq"));
        REQUIRE(batch.values().shape() == frnn::Shape{4, 20, 1, 32, 32});

        REQUIRE(cli.run("gen-data --count 4 --out " + cli.path("b.seq") + " --seed 3").code == 0);
        REQUIRE(cli.slurp(cli.path("a.seq")) == cli.slurp(cli.path("b.seq")));

        REQUIRE(cli.run("gen-data --count 4 --out " + cli.path("c.seq") + " --seed 4").code == 0);
        REQUIRE(cli.slurp(cli.path("a.seq")) != cli.slurp(cli.path("c.seq")));
    }

    SECTION("FRNN_SEED overrides the config seed") {
        REQUIRE(cli.run("gen-data --config " + cfg + " --count 2 --out " + cli.path("e1.seq"),
                        "FRNN_SEED=21").code == 0);
        REQUIRE(cli.run("gen-data --config " + cfg + " --count 2 --out " + cli.path("e2.seq") +
                        " --seed 21").code == 0);
        REQUIRE(cli.slurp(cli.path("e1.seq")) == cli.slurp(cli.path("e2.seq")));
    }

    SECTION("train, predict, evaluate, ablate pipeline") {
        REQUIRE(cli.run("gen-data --config " + cfg + " --count 6 --out " + cli.path("train.seq")).code == 0);

        auto tr = cli.run("train --config " + cfg + " --data " + cli.path("train.seq") +
                          " --checkpoint-out " + cli.path("model.ck") + " --loss-log " +
                          cli.path("loss.txt"));
        REQUIRE(tr.code == 0);
        const std::string log = cli.slurp(cli.path("loss.txt"));
        REQUIRE(std::count(log.begin(), log.end(), '\n') == 3);  // one row per step

        auto ck = frnn::load_checkpoint(cli.path("model.ck"));
        REQUIRE(ck.step == 3);
        REQUIRE(ck.stack.depth() == 2);

        auto pr = cli.run("predict --checkpoint " + cli.path("model.ck") + " --data " +
                          cli.path("train.seq") + " --g 2 --p 2 --out " + cli.path("pred.seq") +
                          " --grid " + cli.path("grid.pgm"));
        REQUIRE(pr.code == 0);
        auto preds = frnn::read_seq(cli.path("pred.seq"));
        REQUIRE(preds.values().shape() == frnn::Shape{6, 2, 1, 16, 16});
        REQUIRE(pr.output.find("encoder steps 2") != std::string::npos);

        // plain graymap: 3 rows, max(g,p)=2 columns, 1px separators
        std::ifstream grid(cli.path("grid.pgm"));
        std::string magic;
        std::size_t w = 0, h = 0;
        grid >> magic >> w >> h;
        REQUIRE(magic == "P2");
        REQUIRE(w == 2 * 16 + 1);
        REQUIRE(h == 3 * 16 + 2);

        auto ev = cli.run("evaluate --checkpoint " + cli.path("model.ck") + " --data " +
                          cli.path("train.seq") + " --g 2 --p 2 --out " + cli.path("eval.txt") +
                          " --baseline --baseline-out " + cli.path("base.txt"));
        REQUIRE(ev.code == 0);
        REQUIRE(ev.output.find("# model") != std::string::npos);
        REQUIRE(ev.output.find("# baseline last-frame") != std::string::npos);
        const std::string table = cli.slurp(cli.path("eval.txt"));
        REQUIRE(std::count(table.begin(), table.end(), '\n') == 4);  // header + 2 steps + mean

        auto ab = cli.run("ablate --checkpoint " + cli.path("model.ck") + " --data " +
                          cli.path("train.seq") + " --g 2 --p 2 --out-dir " + cli.path("ablate"));
        REQUIRE(ab.code == 0);
        for (int k = 0; k <= 2; ++k) {
            REQUIRE(fs::exists(cli.dir() / "ablate" / ("ablate_k" + std::to_string(k) + ".txt")));
            REQUIRE(fs::exists(cli.dir() / "ablate" / ("ablate_k" + std::to_string(k) + ".pgm")));
        }
        // truncation identity: the k=0 table equals the evaluate table byte for byte
        REQUIRE(cli.slurp((cli.dir() / "ablate" / "ablate_k0.txt").string()) == table);

        // out-of-range removal is a runtime error
        REQUIRE(cli.run("ablate --checkpoint " + cli.path("model.ck") + " --data " +
                        cli.path("train.seq") + " --g 2 --p 2 --max-remove 5 --out-dir " +
                        cli.path("ablate2")).code == 1);
    }

    SECTION("resume reproduces an uninterrupted run bit-exactly") {
        REQUIRE(cli.run("gen-data --config " + cfg + " --count 4 --out " + cli.path("d.seq")).code == 0);
        REQUIRE(cli.run("train --config " + cfg + " --data " + cli.path("d.seq") + " --steps 2" +
                        " --checkpoint-out " + cli.path("full.ck")).code == 0);
        REQUIRE(cli.run("train --config " + cfg + " --data " + cli.path("d.seq") + " --steps 1" +
                        " --checkpoint-out " + cli.path("half.ck")).code == 0);
        REQUIRE(cli.run("train --config " + cfg + " --data " + cli.path("d.seq") + " --steps 1" +
                        " --resume " + cli.path("half.ck") + " --checkpoint-out " +
                        cli.path("resumed.ck")).code == 0);
        REQUIRE(cli.slurp(cli.path("full.ck")) == cli.slurp(cli.path("resumed.ck")));
    }

    SECTION("cost prints the formula-level accounting") {
        auto r = cli.run("cost --g 10 --p 10");
        REQUIRE(r.code == 0);
        REQUIRE(r.output.find("folded 170 bridged 320") != std::string::npos);
        REQUIRE(r.output.find("ratio 2") != std::string::npos);
        REQUIRE(r.output.find("1.444") != std::string::npos);
        REQUIRE(r.output.find("1.5") != std::string::npos);
    }

    SECTION("sequence and checkpoint files reject each other") {
        REQUIRE(cli.run("gen-data --config " + cfg + " --count 2 --out " + cli.path("x.seq")).code == 0);
        auto r = cli.run("predict --checkpoint " + cli.path("x.seq") + " --data " + cli.path("x.seq") +
                         " --out " + cli.path("y.seq"));
        REQUIRE(r.code == 1);
        REQUIRE(r.output.find("magic") != std::string::npos);
    }
}
