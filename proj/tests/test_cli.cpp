// End-to-end CLI checks driven through the installed binary (MRT_CLI env).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "mrt/io.hpp"

using namespace mrt;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* env = std::getenv("MRT_CLI");
  return env ? env : "";
}

int run(const std::string& args) {
  const int rc = std::system((cli_path() + " " + args + " >/dev/null 2>&1").c_str());
  return rc == -1 ? -1 : (WIFEXITED(rc) ? WEXITSTATUS(rc) : -1);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("mrt_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("cli end-to-end: make-character, pretrain, retarget, render") {
  if (cli_path().empty()) {
    FAIL("MRT_CLI must point at the CLI binary");
    return;
  }
  TempDir dir;
  REQUIRE(run("make-character --joints 9 --seed 0 --name a --out " + dir.file("a.json")) == 0);
  REQUIRE(run("make-character --joints 9 --seed 1 --name b --out " + dir.file("b.json")) == 0);
  const Character a = load_character(dir.file("a.json"));
  const Character b = load_character(dir.file("b.json"));
  save_motion({"a", synthetic_motion(a.skeleton, 24, 30.0, 3)}, dir.file("ma.json"));
  save_motion({"b", synthetic_motion(b.skeleton, 24, 30.0, 4)}, dir.file("mb.json"));

  REQUIRE(run("pretrain --character " + dir.file("a.json") + " --character " + dir.file("b.json") +
              " --motion " + dir.file("ma.json") + " --motion " + dir.file("mb.json") +
              " --out " + dir.file("c.ckpt") + " --steps 2 --window 8 --batch-size 2 --seed 1") ==
          0);
  CHECK(fs::exists(dir.file("c.ckpt")));

  std::ofstream(dir.file("pair.json"))
      << R"({"source_character": "a.json", "target_character": "b.json"})";
  REQUIRE(run("retarget --checkpoint " + dir.file("c.ckpt") + " --source " + dir.file("ma.json") +
              " --pair " + dir.file("pair.json") + " --out " + dir.file("out.json")) == 0);
  const NamedMotion out = load_motion(dir.file("out.json"));
  CHECK(out.character == "b");
  CHECK(out.motion.frames() == 24);

  REQUIRE(run("render --motion " + dir.file("out.json") + " --character " + dir.file("b.json") +
              " --out " + dir.file("frames") + " --size 32 --stride 8") == 0);
  int pngs = 0;
  for (const auto& e : fs::directory_iterator(dir.file("frames")))
    if (e.path().extension() == ".png") ++pngs;
  CHECK(pngs == 3 * 3);  // 24 frames, stride 8 -> 3 frames x 3 views
}

TEST_CASE("cli validation failures leave no partial outputs and exit 1") {
  if (cli_path().empty()) {
    FAIL("MRT_CLI must point at the CLI binary");
    return;
  }
  TempDir dir;
  // Missing checkpoint file: exit 1, no output written.
  CHECK(run("retarget --checkpoint " + dir.file("missing.ckpt") + " --source x.json --pair p.json" +
            " --out " + dir.file("never.json")) == 1);
  CHECK_FALSE(fs::exists(dir.file("never.json")));

  // Bad usage: unknown subcommand.
  CHECK(run("frobnicate") == 1);

  // Schema violation in an input file: exit 1, no output.
  std::ofstream(dir.file("junk.json")) << "{not json";
  REQUIRE(run("make-character --joints 9 --seed 0 --out " + dir.file("a.json")) == 0);
  std::ofstream(dir.file("pair.json"))
      << R"({"source_character": "a.json", "target_character": "junk.json"})";
  RetargetModel model(1);
  Discriminator disc(1);
  save_checkpoint(dir.file("c.ckpt"), model, disc, 0);
  save_motion({"synth_0", synthetic_motion(load_character(dir.file("a.json")).skeleton, 4, 30, 1)},
              dir.file("m.json"));
  CHECK(run("retarget --checkpoint " + dir.file("c.ckpt") + " --source " + dir.file("m.json") +
            " --pair " + dir.file("pair.json") + " --out " + dir.file("never2.json")) == 1);
  CHECK_FALSE(fs::exists(dir.file("never2.json")));
}
