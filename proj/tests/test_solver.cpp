#include "apdlh/errors.hpp"
#include "apdlh/model_client.hpp"
#include "apdlh/recovery.hpp"
#include "apdlh/solver.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <sys/stat.h>

using namespace apdlh;
using testutil::make_task;

namespace {

const std::string kMeshScript = "ET,1,SOLID185\nBLOCK,0,100,0,20,0,10\nESIZE,2\nVMESH,ALL\nSOLVE\nSET,LAST\nPLNSOL,U,SUM\n";

TaskSpec mesh_task(bool rule_fixable = true) {
    auto t = make_task(1, Category::Static, {FaultClass::MeshFail},
                       rule_fixable ? std::set{FaultClass::MeshFail} : std::set<FaultClass>{}, {FaultClass::MeshFail});
    t.geometry.element_size_mm = 2;
    return t;
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    s.replace(s.find(from), from.size(), to);
    return s;
}

}  // namespace

TEST_CASE("mesh fault predicate") {
    const SimulatedBackend backend;
    const auto task = mesh_task();
    CHECK(mesh_threshold(task) == 4.0);

    const auto bad = backend.execute(parse_script(kMeshScript), task, {});
    CHECK_FALSE(bad.success);
    CHECK(bad.images.empty());
    CHECK(bad.log.exit_status == ExitStatus::Failure);
    const auto sig = extract_failure(bad.log);
    CHECK(sig.fault_class == FaultClass::MeshFail);
    CHECK(sig.command_ref == 3u);

    const auto good = backend.execute(parse_script(replace(kMeshScript, "ESIZE,2", "ESIZE,4")), task, {});
    CHECK(good.success);
    CHECK(good.images.size() >= 1);
    CHECK(good.log.lines.back() == kSolutionComplete);

    const auto free_mesh = backend.execute(parse_script(replace(kMeshScript, "ESIZE,2", "ESIZE,2\nMSHKEY,0")), task, {});
    CHECK(free_mesh.success);

    // MSHKEY,0 set after meshing has no effect
    const auto late = backend.execute(parse_script(kMeshScript + "MSHKEY,0\n"), task, {});
    CHECK_FALSE(late.success);
}

TEST_CASE("rule-resistant mesh faults need four times the nominal size") {
    const auto task = mesh_task(false);
    CHECK(mesh_threshold(task) == 8.0);
    CHECK_FALSE(fault_resolved(FaultClass::MeshFail, parse_script(replace(kMeshScript, "ESIZE,2", "ESIZE,4")), task));
    CHECK(fault_resolved(FaultClass::MeshFail, parse_script(replace(kMeshScript, "ESIZE,2", "ESIZE,8")), task));
    CHECK_FALSE(fault_resolved(FaultClass::MeshFail,
                               parse_script(replace(kMeshScript, "ESIZE,2", "ESIZE,4\nMSHKEY,1")), task));
}

TEST_CASE("empty fault profile always succeeds") {
    const SimulatedBackend backend;
    const auto task = make_task(3, Category::Modal, {}, {}, {});
    const auto out = backend.execute(parse_script("ET,1,SHELL63\nESIZE,0.1\nSOLVE\nSET,99\n"), task, {});
    CHECK(out.success);
    CHECK(out.images.size() == 1);  // no plot directive still yields one image
}

TEST_CASE("images follow the plot directives") {
    const SimulatedBackend backend;
    const auto task = make_task(4, Category::Static, {}, {}, {});
    const auto out = backend.execute(parse_script("SOLVE\nPLNSOL,U,SUM\nPLNSOL,S,EQV\nPLESOL,S,X\n"), task, {2, {}});
    REQUIRE(out.images.size() == 3);
    CHECK(out.images[0] == artifact_name(4, 2, 1));
    CHECK(out.images[2] == "plot_4_2_3.png");
    CHECK(out.solve_steps == 1);
}

TEST_CASE("artifacts are written when a directory is given") {
    testutil::TempDir dir("art");
    const SimulatedBackend backend;
    const auto task = make_task(4, Category::Static, {}, {}, {});
    const auto out = backend.execute(parse_script("SOLVE\nPLNSOL,U,SUM\n"), task, {1, dir.path / "a"});
    REQUIRE(out.images.size() == 1);
    CHECK(std::filesystem::exists(out.images[0]));
}

TEST_CASE("empty script is rejected") {
    const SimulatedBackend backend;
    CHECK_THROWS_AS(backend.execute(ApdlScript{}, make_task(1, Category::Static, {}, {}, {}), {}), InvalidScript);
}

TEST_CASE("each injected class fails on its own predicate") {
    const SimulatedBackend backend;
    SUBCASE("convergence") {
        const auto t = make_task(2, Category::Static, {FaultClass::ConvFail}, {}, {});
        CHECK(extract_failure(backend.execute(parse_script("ANTYPE,STATIC\nSOLVE\n"), t, {}).log).fault_class ==
              FaultClass::ConvFail);
        CHECK(backend.execute(parse_script("AUTOTS,ON\nNSUBST,10\nSOLVE\n"), t, {}).success);
        CHECK_FALSE(backend.execute(parse_script("SOLVE\nAUTOTS,ON\nNSUBST,10\n"), t, {}).success);
    }
    SUBCASE("element type") {
        const auto t = make_task(2, Category::Thermal, {FaultClass::ElemTypeFail}, {}, {});
        const auto out = backend.execute(parse_script("ET,1,SOLID185\nSOLVE\n"), t, {});
        const auto sig = extract_failure(out.log);
        CHECK(sig.fault_class == FaultClass::ElemTypeFail);
        CHECK(rejected_element(sig) == "SOLID185");
        CHECK(backend.execute(parse_script("ET,1,SOLID70\nSOLVE\n"), t, {}).success);
    }
    SUBCASE("missing results") {
        const auto t = make_task(2, Category::Static, {FaultClass::MissingResults}, {}, {});
        CHECK(extract_failure(backend.execute(parse_script("SOLVE\nSET,3,1\n"), t, {}).log).fault_class ==
              FaultClass::MissingResults);
        CHECK(backend.execute(parse_script("SOLVE\nSOLVE\nSOLVE\nSET,3,1\n"), t, {}).success);
        CHECK(backend.execute(parse_script("SOLVE\nSET,LAST\n"), t, {}).success);
    }
    SUBCASE("hard geometry") {
        const auto t = make_task(2, Category::Static, {FaultClass::HardGeom}, {}, {});
        CHECK(extract_failure(backend.execute(parse_script("SOLVE\n"), t, {}).log).fault_class ==
              FaultClass::HardGeom);
    }
}

TEST_CASE("faults are reported in evaluation order") {
    const SimulatedBackend backend;
    const auto t = make_task(2, Category::Static, {FaultClass::MeshFail, FaultClass::ConvFail},
                             {FaultClass::MeshFail, FaultClass::ConvFail}, {});
    const auto first = backend.execute(parse_script("ESIZE,1\nVMESH,ALL\nSOLVE\n"), t, {});
    CHECK(extract_failure(first.log).fault_class == FaultClass::MeshFail);
    const auto second = backend.execute(parse_script("ESIZE,100\nVMESH,ALL\nSOLVE\n"), t, {});
    CHECK(extract_failure(second.log).fault_class == FaultClass::ConvFail);
}

TEST_CASE("simulated execution is deterministic and success matches artifacts") {
    const SimulatedBackend backend;
    const auto corpus = generate_default_corpus(42);
    const ScriptedModelClient model(CompetenceTable::benchmark_default(), 42);
    for (const auto& task : corpus.tasks) {
        const auto script = model.generate_initial(task);
        const auto a = backend.execute(script, task, {1, {}});
        const auto b = backend.execute(script, task, {1, {}});
        CHECK(a == b);
        CHECK(a.success == !a.images.empty());
        CHECK(a.success == (a.log.exit_status == ExitStatus::Success));
        CHECK(a.success == task.fault_profile.injected_faults.empty());
        CHECK(sim_outcome_from_json(to_json(a)) == a);
    }
}

TEST_CASE("rule patches clear every rule-resolvable fault") {
    const SimulatedBackend backend;
    for (std::uint64_t seed : {42u, 1u, 2u, 3u, 99u}) {
        const auto corpus = generate_default_corpus(seed);
        for (const auto& task : corpus.tasks) {
            auto script = scripted_generate_initial(task, seed);
            // walk the injected faults in evaluation order, patching each with its rule
            for (int step = 0; step < 6; ++step) {
                const auto out = backend.execute(script, task, {});
                if (out.success) break;
                const auto sig = extract_failure(out.log);
                if (!task.fault_profile.rule_resolvable.count(sig.fault_class)) break;
                const auto patched = rule_patch(script, sig).patched;
                const auto again = backend.execute(patched, task, {});
                CAPTURE(task.case_id);
                CAPTURE(to_string(sig.fault_class));
                CHECK(fault_resolved(sig.fault_class, patched, task));
                if (!again.success) CHECK(extract_failure(again.log).fault_class != sig.fault_class);
                script = patched;
            }
        }
    }
}

TEST_CASE("hard geometry survives every available transformation") {
    const SimulatedBackend backend;
    const auto corpus = generate_default_corpus(42);
    CompetenceTable perfect;
    for (auto c : kInjectableFaults) perfect.p[c] = 1.0;
    for (int id : kHardCaseIds) {
        const auto& task = corpus.task(id);
        auto script = scripted_generate_initial(task, 42);
        for (int attempt = 1; attempt <= 8; ++attempt) {
            const auto out = backend.execute(script, task, {attempt, {}});
            REQUIRE_FALSE(out.success);
            const auto sig = extract_failure(out.log);
            const auto patched = rule_patch(script, sig);
            const auto repaired = scripted_repair(patched.patched, sig, task, perfect, 42, attempt);
            if (sig.fault_class == FaultClass::HardGeom) {
                CHECK_FALSE(patched.changed);
                CHECK_FALSE(repaired.corrected);
            }
            script = repaired.script;
        }
        CHECK(extract_failure(backend.execute(script, task, {}).log).fault_class == FaultClass::HardGeom);
    }
}

TEST_CASE("select_backend") {
    using enum BackendId;
    CHECK(select_backend({{ExternalCommand, Simulated}, "/nonexistent/mapdl", {}})->backend_id() == Simulated);
    CHECK(select_backend({{Simulated}, {}, {}})->backend_id() == Simulated);
    CHECK(select_backend({{}, {}, {}})->backend_id() == Simulated);
    CHECK(select_backend({{Fallback, Simulated}, {}, {}})->backend_id() == Fallback);
    CHECK(parse_backend_id("external_command") == ExternalCommand);
    CHECK_FALSE(parse_backend_id("pymapdl").has_value());
}

TEST_CASE("external command backend") {
    testutil::TempDir dir("ext");
    const auto solver = dir / "fake_mapdl.sh";
    testutil::spit(solver,
                   "#!/bin/sh\n"
                   "if grep -q FAILME \"$1\"; then echo '*** ERROR *** SOLUTION NOT CONVERGED'; exit 8; fi\n"
                   "echo 'SOLUTION COMPLETE'\n"
                   "echo 'IMAGE WRITTEN: out.png'\n");
    ::chmod(solver.c_str(), 0755);
    REQUIRE(ExternalCommandBackend::available(solver));

    const auto backend = select_backend({{BackendId::ExternalCommand, BackendId::Simulated}, solver, dir / "work"});
    REQUIRE(backend->backend_id() == BackendId::ExternalCommand);
    const auto task = make_task(9, Category::Static, {}, {}, {});

    const auto ok = backend->execute(parse_script("SOLVE\n"), task, {});
    CHECK(ok.success);
    CHECK(ok.images == std::vector<std::string>{"out.png"});

    const auto bad = backend->execute(parse_script("FAILME\nSOLVE\n"), task, {});
    CHECK_FALSE(bad.success);
    CHECK(bad.images.empty());
    CHECK(extract_failure(bad.log).fault_class == FaultClass::ConvFail);
}
