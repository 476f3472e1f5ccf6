// Copyright 2026 The cvse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Drives the installed binary end to end through a shell, checking exit
// codes, artifacts, and determinism.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cvse/data.hpp"
#include "cvse/model.hpp"
#include "support/tempdir.hpp"

namespace fs = std::filesystem;
using cvse::support::TempDir;
using cvse::support::read_bytes;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const TempDir& tmp, const std::string& args) {
  static int counter = 0;
  fs::path log = tmp.path() / ("cli-out-" + std::to_string(counter++) + ".log");
  std::string cmd = std::string(CVSE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  RunResult res;
  if (WIFEXITED(status)) res.exit_code = WEXITSTATUS(status);
  res.output = read_bytes(log);
  return res;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void gen_small(const TempDir& tmp, const fs::path& dir, std::uint64_t seed = 3) {
  RunResult gen = run_cli(
      tmp, "gen-synth --out " + q(dir) +
               " --images 30 --captions-per-image 2 --latent-dim 4 --image-dim 10"
               " --text-dim 8 --sigma 0.05 --seed " + std::to_string(seed));
  REQUIRE_MESSAGE(gen.exit_code == 0, gen.output);
}

}  // namespace

TEST_CASE("bare invocation and unknown commands are config errors") {
  TempDir tmp("cli-basic");
  CHECK(run_cli(tmp, "").exit_code == 2);
  CHECK(run_cli(tmp, "frobnicate").exit_code == 2);
  CHECK(run_cli(tmp, "--help").exit_code == 0);
  CHECK(run_cli(tmp, "train-base").exit_code == 2);  // missing required flags
}

TEST_CASE("gen-synth writes a loadable, byte-deterministic dataset") {
  TempDir tmp("cli-gen");
  fs::path d1 = tmp.path() / "d1";
  fs::path d2 = tmp.path() / "d2";

  RunResult first = run_cli(tmp, "gen-synth --out " + q(d1) +
                                     " --images 40 --captions-per-image 2 --latent-dim 4"
                                     " --image-dim 10 --text-dim 8 --seed 11");
  REQUIRE_MESSAGE(first.exit_code == 0, first.output);
  CHECK(first.output.find("wrote 40 images / 80 captions") != std::string::npos);

  RunResult second = run_cli(tmp, "gen-synth --out " + q(d2) +
                                      " --images 40 --captions-per-image 2 --latent-dim 4"
                                      " --image-dim 10 --text-dim 8 --seed 11");
  REQUIRE(second.exit_code == 0);

  cvse::DatasetPaths p1 = cvse::dataset_paths(d1);
  cvse::DatasetPaths p2 = cvse::dataset_paths(d2);
  for (const auto& [a, b] : {std::pair{p1.images, p2.images},
                             std::pair{p1.captions, p2.captions},
                             std::pair{p1.pairing, p2.pairing},
                             std::pair{p1.split, p2.split}}) {
    REQUIRE(fs::exists(a));
    CHECK(read_bytes(a) == read_bytes(b));
  }

  cvse::PairedDataset ds = cvse::load_dataset_dir(d1);
  CHECK(ds.images.rows() == 40);
  CHECK(ds.captions.rows() == 80);
}

TEST_CASE("two-stage pipeline produces run directories and checkpoints") {
  TempDir tmp("cli-pipe");
  fs::path data = tmp.path() / "data";
  gen_small(tmp, data);

  fs::path base_dir = tmp.path() / "base";
  RunResult base = run_cli(tmp, "train-base --data " + q(data) + " --run-dir " + q(base_dir) +
                                    " --dim 6 --batch 8 --epochs 2 --seed 7");
  REQUIRE_MESSAGE(base.exit_code == 0, base.output);
  CHECK(base.output.find("best epoch:") != std::string::npos);

  for (const char* name :
       {"config.txt", "loss_curve.tsv", "checkpoint.cvse", "report.txt", "report.kv"}) {
    CHECK_MESSAGE(fs::exists(base_dir / name), name);
  }
  std::string echo = read_bytes(base_dir / "config.txt");
  CHECK(echo.find("loss=\"mh\"") != std::string::npos);
  CHECK(echo.find("alpha=0.2") != std::string::npos);
  CHECK(echo.find("batch=8") != std::string::npos);
  std::string curve = read_bytes(base_dir / "loss_curve.tsv");
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 2);

  cvse::LoadedCheckpoint base_ckpt = cvse::load_checkpoint(base_dir / "checkpoint.cvse");
  CHECK(!base_ckpt.network.config.with_heads);
  CHECK(base_ckpt.meta.loss == "mh");
  CHECK(base_ckpt.meta.seed == 7);

  fs::path con_dir = tmp.path() / "con";
  RunResult con = run_cli(
      tmp, "train-contrastive --data " + q(data) + " --run-dir " + q(con_dir) +
               " --base-checkpoint " + q(base_dir / "checkpoint.cvse") +
               " --loss cmn --dim 4 --head-hidden 8 --batch 8 --epochs 1 --seed 7");
  REQUIRE_MESSAGE(con.exit_code == 0, con.output);
  cvse::LoadedCheckpoint con_ckpt = cvse::load_checkpoint(con_dir / "checkpoint.cvse");
  CHECK(con_ckpt.network.config.with_heads);
  CHECK(con_ckpt.network.embedding_dim() == 4);
  CHECK(con_ckpt.meta.loss == "cmn");

  // Frozen variant keeps the base towers bit for bit.
  fs::path frozen_dir = tmp.path() / "frozen";
  RunResult frozen = run_cli(
      tmp, "train-contrastive --data " + q(data) + " --run-dir " + q(frozen_dir) +
               " --base-checkpoint " + q(base_dir / "checkpoint.cvse") +
               " --loss csn --dim 4 --head-hidden 8 --batch 8 --epochs 1 --freeze-base");
  REQUIRE_MESSAGE(frozen.exit_code == 0, frozen.output);
  cvse::LoadedCheckpoint frozen_ckpt = cvse::load_checkpoint(frozen_dir / "checkpoint.cvse");
  CHECK((frozen_ckpt.network.image_base.weight - base_ckpt.network.image_base.weight)
            .cwiseAbs().maxCoeff() == 0.0);
  CHECK((frozen_ckpt.network.text_base.weight - base_ckpt.network.text_base.weight)
            .cwiseAbs().maxCoeff() == 0.0);

  // Evaluation of the saved checkpoint, with report files.
  fs::path eval_dir = tmp.path() / "eval";
  RunResult eval = run_cli(tmp, "eval --data " + q(data) + " --checkpoint " +
                                    q(base_dir / "checkpoint.cvse") + " --split val --out " +
                                    q(eval_dir));
  REQUIRE_MESSAGE(eval.exit_code == 0, eval.output);
  CHECK(eval.output.find("R@sum") != std::string::npos);
  CHECK(fs::exists(eval_dir / "report.txt"));
  std::string record = read_bytes(eval_dir / "report.kv");
  CHECK(record.find("rsum=") != std::string::npos);
}

TEST_CASE("same seed gives identical checkpoint bytes") {
  TempDir tmp("cli-det");
  fs::path data = tmp.path() / "data";
  gen_small(tmp, data);

  fs::path r1 = tmp.path() / "r1";
  fs::path r2 = tmp.path() / "r2";
  std::string args = " --data " + q(data) + " --dim 6 --batch 8 --epochs 2 --seed 19";
  REQUIRE(run_cli(tmp, "train-base --run-dir " + q(r1) + args).exit_code == 0);
  REQUIRE(run_cli(tmp, "train-base --run-dir " + q(r2) + args).exit_code == 0);
  CHECK(read_bytes(r1 / "checkpoint.cvse") == read_bytes(r2 / "checkpoint.cvse"));
  CHECK(read_bytes(r1 / "loss_curve.tsv") == read_bytes(r2 / "loss_curve.tsv"));
  CHECK(read_bytes(r1 / "report.kv") == read_bytes(r2 / "report.kv"));
}

TEST_CASE("fold evaluation prints one row per fold plus the mean") {
  TempDir tmp("cli-folds");
  fs::path data = tmp.path() / "data";
  gen_small(tmp, data);  // 30 images: 3 land in the test split

  fs::path base_dir = tmp.path() / "base";
  REQUIRE(run_cli(tmp, "train-base --data " + q(data) + " --run-dir " + q(base_dir) +
                           " --dim 6 --batch 8 --epochs 1").exit_code == 0);

  RunResult folds = run_cli(tmp, "eval --data " + q(data) + " --checkpoint " +
                                     q(base_dir / "checkpoint.cvse") +
                                     " --split test --folds 3 --fold-size 1");
  REQUIRE_MESSAGE(folds.exit_code == 0, folds.output);
  CHECK(folds.output.find("fold1") != std::string::npos);
  CHECK(folds.output.find("fold3") != std::string::npos);
  CHECK(folds.output.find("mean") != std::string::npos);

  // Too many folds for the split is a config error.
  RunResult over = run_cli(tmp, "eval --data " + q(data) + " --checkpoint " +
                                    q(base_dir / "checkpoint.cvse") +
                                    " --split test --folds 4 --fold-size 1");
  CHECK(over.exit_code == 2);
}

TEST_CASE("config files feed flags and the command line wins") {
  TempDir tmp("cli-config");
  fs::path data = tmp.path() / "data";
  gen_small(tmp, data);

  fs::path cfg = tmp.path() / "train.cfg";
  std::ofstream(cfg) << "loss=sh\nepochs=1\ndim=6\nbatch=8\nseed=23\ndata=" << data.string()
                     << "\n";

  fs::path run_dir = tmp.path() / "run";
  RunResult res = run_cli(tmp, "train-base --config " + q(cfg) + " --run-dir " + q(run_dir) +
                                   " --epochs 2");
  REQUIRE_MESSAGE(res.exit_code == 0, res.output);
  std::string echo = read_bytes(run_dir / "config.txt");
  CHECK(echo.find("loss=\"sh\"") != std::string::npos);  // from the file
  CHECK(echo.find("epochs=2") != std::string::npos);     // flag overrides file
  std::string curve = read_bytes(run_dir / "loss_curve.tsv");
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 2);
}

TEST_CASE("input problems are rejected before any side effect") {
  TempDir tmp("cli-validate");
  fs::path data = tmp.path() / "data";
  gen_small(tmp, data);

  fs::path run_dir = tmp.path() / "never-created";

  // Unknown loss kind: config error, no run directory.
  RunResult bad_loss = run_cli(tmp, "train-base --data " + q(data) + " --run-dir " + q(run_dir) +
                                        " --loss csn --dim 6 --batch 8 --epochs 1");
  CHECK(bad_loss.exit_code == 2);
  CHECK(!fs::exists(run_dir));

  // Missing dataset: data error, no run directory.
  RunResult bad_data = run_cli(tmp, "train-base --data " + q(tmp.path() / "nope") +
                                        " --run-dir " + q(run_dir) +
                                        " --dim 6 --batch 8 --epochs 1");
  CHECK(bad_data.exit_code == 3);
  CHECK(!fs::exists(run_dir));

  // Corrupt feature file: data error.
  fs::path broken = tmp.path() / "broken";
  fs::create_directories(broken);
  fs::copy(data, broken, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  std::string bytes = read_bytes(cvse::dataset_paths(broken).images);
  bytes[bytes.size() / 2] ^= 0x20;
  cvse::support::write_bytes(cvse::dataset_paths(broken).images, bytes);
  RunResult corrupt = run_cli(tmp, "train-base --data " + q(broken) + " --run-dir " + q(run_dir) +
                                       " --dim 6 --batch 8 --epochs 1");
  CHECK(corrupt.exit_code == 3);
  CHECK(!fs::exists(run_dir));
}

TEST_CASE("non-finite similarities exit with the numeric failure code") {
  TempDir tmp("cli-numeric");
  fs::path data = tmp.path() / "data";
  fs::create_directories(data);

  // Five images, one caption each. One train image's features are all
  // zero: with zero-initialized biases its first-batch embedding has no
  // direction, so the cosine is undefined before any update happens.
  cvse::FeatureTable images;
  images.ids = {"i0", "i1", "i2", "i3", "i4"};
  images.features = cvse::Matrix::Ones(5, 3);
  cvse::FeatureTable captions;
  captions.ids = {"c0", "c1", "c2", "c3", "c4"};
  captions.features = cvse::Matrix::Ones(5, 3);
  for (cvse::Index r = 0; r < 5; ++r) {
    images.features(r, 0) += static_cast<double>(r);
    captions.features(r, 1) += 0.5 * static_cast<double>(r);
  }
  images.features.row(1).setZero();

  cvse::DatasetPaths paths = cvse::dataset_paths(data);
  cvse::write_feature_file(paths.images, images);
  cvse::write_feature_file(paths.captions, captions);
  std::ofstream(paths.pairing) << "c0\ti0\nc1\ti1\nc2\ti2\nc3\ti3\nc4\ti4\n";
  std::ofstream(paths.split) << "i0\ttrain\ni1\ttrain\ni2\ttrain\ni3\tval\ni4\ttest\n";

  fs::path run_dir = tmp.path() / "run";
  RunResult res = run_cli(tmp, "train-base --data " + q(data) + " --run-dir " + q(run_dir) +
                                   " --dim 4 --batch 3 --epochs 1");
  CHECK(res.exit_code == 4);
  CHECK(!fs::exists(run_dir));
}

TEST_CASE("sweep emits one table row per value") {
  TempDir tmp("cli-sweep");
  fs::path data = tmp.path() / "data";
  gen_small(tmp, data);

  fs::path run_dir = tmp.path() / "sweep";
  RunResult res = run_cli(
      tmp, "sweep --data " + q(data) + " --run-dir " + q(run_dir) +
               " --param tau --values 0.1,0.5 --base-loss mh --batch-base 8 --loss cmn"
               " --dim 4 --head-hidden 8 --batch 8 --epochs 1");
  REQUIRE_MESSAGE(res.exit_code == 0, res.output);
  CHECK(res.output.find("tau=0.1") != std::string::npos);
  CHECK(res.output.find("tau=0.5") != std::string::npos);
  CHECK(fs::exists(run_dir / "sweep.txt"));
  CHECK(read_bytes(run_dir / "sweep.txt").find("tau=0.5") != std::string::npos);

  RunResult bad = run_cli(tmp, "sweep --data " + q(data) + " --run-dir " + q(run_dir) +
                                   " --param margin --values 0.1");
  CHECK(bad.exit_code == 2);
}
