#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "incisor/error.hpp"
#include "incisor/submission.hpp"
#include "support/test_support.hpp"

using namespace incisor;
using namespace incisor::testing;

namespace {

std::vector<std::string> texts(std::string_view cmd) {
  std::vector<std::string> out;
  for (auto& t : shell_tokenize(cmd)) out.push_back(t.text);
  return out;
}

errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no incisor::error thrown";
  return errc::invariant_violation;
}

}  // namespace

// Expected token lists come from Python's shlex.split.
TEST(ShellTokenize, MatchesShlexOnRepeatedAssignments) {
  EXPECT_EQ(texts("A=1 A=2 ./x --f \"a b\""), (std::vector<std::string>{"A=1", "A=2", "./x", "--f", "a b"}));
}

TEST(ShellTokenize, MatchesShlexOnMixedQuoting) {
  EXPECT_EQ(texts(R"(X="a b" Y='c' ./run --k=v "q\"x" a\ b)"),
            (std::vector<std::string>{"X=a b", "Y=c", "./run", "--k=v", "q\"x", "a b"}));
}

TEST(ShellTokenize, KeepsEmptyQuotedWords) {
  EXPECT_EQ(texts("./prog \"\" '' x"), (std::vector<std::string>{"./prog", "", "", "x"}));
}

TEST(ShellTokenize, AssignmentWordsNeedAnUnquotedName) {
  auto t = shell_tokenize("OMP_NUM_THREADS=8 'A'=1 1X=2 ./a K=V");
  ASSERT_EQ(t.size(), 5u);
  EXPECT_EQ(t[0].assignment_name_len, 15u);
  EXPECT_EQ(t[1].assignment_name_len, 0u);
  EXPECT_EQ(t[2].assignment_name_len, 0u);
  EXPECT_EQ(t[4].assignment_name_len, 1u);  // the caller decides that it is an argument
}

TEST(ShellTokenize, UnbalancedQuoteIsAnError) {
  EXPECT_EQ(code_of([] { shell_tokenize("./a 'oops"); }), errc::unbalanced_quote);
  EXPECT_EQ(code_of([] { shell_tokenize("./a \"oops"); }), errc::unbalanced_quote);
}

TEST(ParseInvocation, SplitsLeadingAssignmentsIntoEnv) {
  auto ctx = parse_invocation("A=1 A=2 OMP_NUM_THREADS=16 ./cg.D.x -v OMP_X=3");
  EXPECT_EQ(ctx.env.at("A"), "2");
  EXPECT_EQ(ctx.env.at("OMP_NUM_THREADS"), "16");
  EXPECT_EQ(ctx.args, (std::vector<std::string>{"./cg.D.x", "-v", "OMP_X=3"}));
  EXPECT_FALSE(ctx.env.count("OMP_X"));
}

TEST(ParseInvocation, EmptyCommandIsRejected) {
  EXPECT_EQ(code_of([] { parse_invocation("   "); }), errc::empty_command);
}

TEST(ParseInvocation, RenderRoundTripsRandomInvocations) {
  std::mt19937_64 rng(7);
  const std::string alphabet = "ab =$'\"\\\t;*~x1-_/";
  auto word = [&](bool allow_empty) {
    std::string w;
    std::size_t n = rng() % 7 + (allow_empty ? 0 : 1);
    for (std::size_t i = 0; i < n; ++i) w += alphabet[rng() % alphabet.size()];
    return w;
  };
  for (int trial = 0; trial < 500; ++trial) {
    InvocationContext ctx;
    int envs = static_cast<int>(rng() % 3);
    for (int i = 0; i < envs; ++i) ctx.env["V" + std::to_string(i)] = word(true);
    std::string first = word(false);
    if (first.find_first_not_of(" \t") == std::string::npos) first = "prog";
    ctx.args.push_back(first);
    int n = static_cast<int>(rng() % 4);
    for (int i = 0; i < n; ++i) ctx.args.push_back(word(true));
    ctx.command = render_invocation(ctx);
    auto back = parse_invocation(ctx.command);
    EXPECT_EQ(back.env, ctx.env) << ctx.command;
    EXPECT_EQ(back.args, ctx.args) << ctx.command;
  }
}

TEST(ShellQuote, QuotedWordTokenizesToItself) {
  for (std::string w : {"", "plain", "a b", "it's", "\"q\"", "$HOME", "a\\b", "tab\there"}) {
    auto t = shell_tokenize(shell_quote(w));
    ASSERT_EQ(t.size(), 1u) << w;
    EXPECT_EQ(t[0].text, w);
  }
}

TEST(ClassifyWorkload, UsesMagicShebangThenExtension) {
  EXPECT_EQ(classify_workload_bytes("\x7f" "ELF\x02\x01", "a.out"), WorkloadKind::compiled_binary);
  EXPECT_EQ(classify_workload_bytes("#!/bin/bash\necho", "run"), WorkloadKind::shell_script);
  EXPECT_EQ(classify_workload_bytes("#!/usr/bin/env python3\n", "tool"), WorkloadKind::interpreted_entry_point);
  EXPECT_EQ(classify_workload_bytes("import os\n", "train.py"), WorkloadKind::interpreted_entry_point);
  EXPECT_EQ(classify_workload_bytes("echo hi\n", "job.sh"), WorkloadKind::shell_script);
  EXPECT_EQ(code_of([] { classify_workload_bytes("data", "blob.bin"); }), errc::unknown_workload_kind);
}

TEST(ClassifyWorkload, ShippedFixtures) {
  EXPECT_EQ(classify_workload(cg_binary()), WorkloadKind::compiled_binary);
  EXPECT_EQ(classify_workload(fixture("jobs/python/reduce.py")), WorkloadKind::interpreted_entry_point);
  EXPECT_EQ(classify_workload(fixture("jobs/shell/pipeline.sh")), WorkloadKind::shell_script);
}

TEST(JobId, Validity) {
  EXPECT_TRUE(is_valid_job_id("18726"));
  EXPECT_TRUE(is_valid_job_id("20261018T125837037635Z-000005ea"));
  EXPECT_FALSE(is_valid_job_id(""));
  EXPECT_FALSE(is_valid_job_id("../etc"));
  EXPECT_FALSE(is_valid_job_id("a/b"));
  EXPECT_FALSE(is_valid_job_id("-x"));
  EXPECT_FALSE(is_valid_job_id(std::string(65, 'a')));
}

TEST(JobId, GeneratorIsStrictlyIncreasingAcrossThreads) {
  JobIdGenerator gen;
  std::vector<std::vector<std::string>> per(4);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 200; ++i) per[t].push_back(gen.next());
    });
  }
  for (auto& th : threads) th.join();
  std::set<std::string> all;
  for (const auto& v : per) {
    for (std::size_t i = 1; i < v.size(); ++i) EXPECT_LT(v[i - 1], v[i]);
    all.insert(v.begin(), v.end());
  }
  EXPECT_EQ(all.size(), 800u);
  for (const auto& id : all) EXPECT_TRUE(is_valid_job_id(id)) << id;
}

TEST(Normalize, CgCommandResolvesEntryAndSiblingEvidence) {
  JobSpec spec = cg_job();
  EXPECT_EQ(spec.workload_kind, WorkloadKind::compiled_binary);
  EXPECT_EQ(spec.entry_path, cg_binary());
  EXPECT_EQ(spec.invocation.env.at("OMP_NUM_THREADS"), "8");
  std::set<std::string> evidence;
  for (const auto& a : spec.aux_artifacts) {
    if (a.role == ArtifactRole::evidence_file) evidence.insert(a.path.filename().string());
  }
  EXPECT_EQ(evidence, (std::set<std::string>{"cg.D.x.dis", "cg.D.x.cg.json"}));
  EXPECT_FALSE(spec.user_overrides.has_value());
}

TEST(Normalize, RelativePathsResolveAgainstWorkingDir) {
  NormalizeContext ctx;
  ctx.working_dir = fixture("jobs/python");
  auto spec = normalize_submission("python3 reduce.py in.h5", {{"job-src", "lib"}}, ctx);
  EXPECT_EQ(spec.entry_path, fixture("jobs/python/reduce.py"));
  ASSERT_EQ(spec.aux_artifacts.size(), 1u);
  EXPECT_EQ(spec.aux_artifacts[0].role, ArtifactRole::source_tree);
  EXPECT_EQ(spec.aux_artifacts[0].path, fixture("jobs/python/lib"));
}

TEST(Normalize, LauncherPrefixIsSkipped) {
  auto spec = normalize_submission("mpirun -np 4 " + cg_binary().string(), {});
  EXPECT_EQ(spec.entry_path, cg_binary());
}

TEST(Normalize, FlagsBecomeOverridesAndHistoryRefs) {
  auto spec = normalize_submission(cg_binary().string(),
                                   {{"job-history", "18726,18843"}, {"ram", "32"}, {"cloud", "aws"}});
  EXPECT_EQ(spec.history_refs, (std::vector<std::string>{"18726", "18843"}));
  ASSERT_TRUE(spec.user_overrides);
  EXPECT_EQ(spec.user_overrides->ram_gb, 32.0);
  EXPECT_EQ(spec.user_overrides->cloud, "aws");
  EXPECT_FALSE(spec.bypasses_recommendation());
}

TEST(Normalize, InstanceTypeBypassesAndConflictsWithConstraints) {
  auto spec = normalize_submission(cg_binary().string(), {{"cloud", "aws"}, {"instance-type", "c8a.4xlarge"}});
  EXPECT_TRUE(spec.bypasses_recommendation());

  TempDir dir("norm");
  write_file(dir / "c.json", R"({"cpu_count": 4})");
  EXPECT_EQ(code_of([&] {
              normalize_submission(cg_binary().string(),
                                   {{"instance-type", "c8a.4xlarge"}, {"constraints", (dir / "c.json").string()}});
            }),
            errc::conflicting_overrides);
}

TEST(Normalize, ErrorsAreTyped) {
  EXPECT_EQ(code_of([] { normalize_submission("./definitely-missing", {}); }), errc::unreadable_file);
  EXPECT_EQ(code_of([] { normalize_submission(cg_binary().string(), {{"job-src", "/no/such/dir"}}); }),
            errc::unreadable_file);
  EXPECT_EQ(code_of([] { normalize_submission(cg_binary().string(), {{"job-history", "ok,../bad"}}); }),
            errc::invalid_job_id);
  EXPECT_EQ(code_of([] { normalize_submission(cg_binary().string(), {{"ram", "-3"}}); }), errc::parse_error);
  EXPECT_EQ(code_of([] { normalize_submission("", {}); }), errc::empty_command);
}

TEST(Normalize, StagingCopiesArtifactsIntoTheJobDirectory) {
  TempDir store("stage");
  NormalizeContext ctx;
  ctx.store_root = store.path();
  ctx.job_id = "staged-1";
  auto spec = normalize_submission("OMP_NUM_THREADS=8 " + cg_binary().string(),
                                   {{"job-src", fixture("jobs/python/lib").string()}}, ctx);
  ASSERT_TRUE(spec.staged_entry);
  EXPECT_TRUE(spec.staged_entry->string().starts_with((store.path() / "jobs/staged-1/artifacts").string()));
  EXPECT_EQ(read_file(*spec.staged_entry), read_file(cg_binary()));
  for (const auto& a : spec.aux_artifacts) {
    ASSERT_TRUE(a.staged) << a.path;
    EXPECT_TRUE(fs::exists(*a.staged));
  }
  // Originals are recorded untouched.
  EXPECT_EQ(spec.entry_path, cg_binary());
}

TEST(JobSpecJson, RoundTrips) {
  auto spec = normalize_submission("A='x y' " + cg_binary().string() + " --n 3",
                                   {{"job-history", "18726"}, {"ram", "12.5"}, {"cloud", "gcp"}});
  EXPECT_EQ(job_spec_from_json(to_json(spec)), spec);
  EXPECT_EQ(job_spec_from_json(json::parse(to_json(spec).dump())), spec);
}
