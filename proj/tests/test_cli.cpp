#include <catch2/catch.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

const std::string cli = KSDG_CLI_PATH;

struct CommandResult {
    int exit_code;
    std::string out;
    std::string err;
};

CommandResult run_cli(const std::string& args, const std::string& workdir) {
    const std::string out_path = workdir + "/cmd.out";
    const std::string err_path = workdir + "/cmd.err";
    const std::string cmd = "cd " + workdir + " && " + cli + " " + args + " > cmd.out 2> cmd.err";
    const int status = std::system(cmd.c_str());
    CommandResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::stringstream so, se;
    so << std::ifstream(out_path).rdbuf();
    se << std::ifstream(err_path).rdbuf();
    r.out = so.str();
    r.err = se.str();
    return r;
}

std::string make_workdir(const std::string& name) {
    const std::string dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

int count_lines(const std::string& path) {
    std::ifstream in(path);
    int n = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

} // namespace

TEST_CASE("run: estimator log schema and summary line") {
    const std::string dir = make_workdir("ksdg_cli_run");
    write_file(dir + "/run.ini", "[mesh]\nlevel = 2\n[space]\ndegree = 1\n"
                                 "[initial]\nkind = gaussian\namplitude = 1000\n"
                                 "[output]\ndirectory = out\n");
    const CommandResult r = run_cli("run run.ini", dir);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("RESULT") != std::string::npos);
    CHECK(r.out.find("Abar=") != std::string::npos);
    CHECK(r.out.find("condition=") != std::string::npos);

    const std::string log = dir + "/out/estimators.csv";
    REQUIRE(fs::exists(log));
    std::ifstream in(log);
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,E0,E1,Eminus1,E1tilde,ERrho,ERrho_t1,ERrho_t2,ERrho_t3,ERrho_t4,"
                    "ERrho_t5,abar,rho_Linf,gradc_Linf");
    // scaled tau exceeds T, so the ceil rule gives one step: t=0 plus t=T
    CHECK(count_lines(log) == 3);
    CHECK(fs::exists(dir + "/out/effective_config.ini"));
    fs::remove_all(dir);
}

TEST_CASE("run: constant data certify the condition with zero bound") {
    const std::string dir = make_workdir("ksdg_cli_const");
    write_file(dir + "/run.ini", "[mesh]\nlevel = 2\n[initial]\nkind = constant\nvalue = 1.0\n"
                                 "[output]\ndirectory = out\n");
    const CommandResult r = run_cli("run run.ini", dir);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("condition=holds") != std::string::npos);
    CHECK(r.out.find("certified=1") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("run: missing section exits 1 and names the key") {
    const std::string dir = make_workdir("ksdg_cli_miss");
    write_file(dir + "/bad.ini", "[space]\ndegree = 1\n");
    const CommandResult r = run_cli("run bad.ini", dir);
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("[mesh] level") != std::string::npos);
    const CommandResult r2 = run_cli("run does_not_exist.ini", dir);
    CHECK(r2.exit_code == 1);
    fs::remove_all(dir);
}

TEST_CASE("study: rows, EOC column count, byte-identical rerun") {
    const std::string dir = make_workdir("ksdg_cli_study");
    write_file(dir + "/study.ini", "[mesh]\nlevel = 1\n[space]\ndegree = 1\n"
                                   "[initial]\nkind = gaussian\namplitude = 1000\n"
                                   "[output]\ndirectory = study_out\n");
    const CommandResult r = run_cli("study study.ini --kmin 1 --kmax 3", dir);
    REQUIRE(r.exit_code == 0);
    const std::string table = dir + "/study_out/E0_at0.csv";
    REQUIRE(fs::exists(table));
    CHECK(count_lines(table) == 4); // header + 3 levels
    REQUIRE(fs::exists(dir + "/study_out/summary.csv"));

    std::stringstream first;
    first << std::ifstream(dir + "/study_out/summary.csv").rdbuf();
    const CommandResult r2 = run_cli("study study.ini --kmin 1 --kmax 3", dir);
    REQUIRE(r2.exit_code == 0);
    std::stringstream second;
    second << std::ifstream(dir + "/study_out/summary.csv").rdbuf();
    CHECK(first.str() == second.str());

    const CommandResult bad = run_cli("study study.ini --kmin 3 --kmax 3", dir);
    CHECK(bad.exit_code == 1);
    fs::remove_all(dir);
}

TEST_CASE("check-condition: synthetic log reproduces the textbook margin") {
    const std::string dir = make_workdir("ksdg_cli_check");
    write_file(dir + "/cfg.ini", "[mesh]\nlevel = 2\n");
    // E0(0) = sqrt(0.5) makes Abar = 1; at T = 0 the margin is 2^9 * 4 = 2048
    write_file(dir + "/log.csv",
               "t,E0,E1,Eminus1,E1tilde,ERrho,ERrho_t1,ERrho_t2,ERrho_t3,ERrho_t4,"
               "ERrho_t5,abar,rho_Linf,gradc_Linf\n"
               "0,0.70710678118654752,0,0,0,0,0,0,0,0,0,0,0,0\n");
    const CommandResult r = run_cli("check-condition log.csv cfg.ini --T 0", dir);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("margin=2048") != std::string::npos);
    CHECK(r.out.find("FAILS") != std::string::npos);

    // all-zero log: condition holds with saturated negative log margin
    write_file(dir + "/zero.csv",
               "t,E0,E1,Eminus1,E1tilde,ERrho,ERrho_t1,ERrho_t2,ERrho_t3,ERrho_t4,"
               "ERrho_t5,abar,rho_Linf,gradc_Linf\n"
               "0,0,0,0,0,0,0,0,0,0,0,0,0,0\n"
               "1e-4,0,0,0,0,0,0,0,0,0,0,0,0,0\n");
    const CommandResult rz = run_cli("check-condition zero.csv cfg.ini", dir);
    REQUIRE(rz.exit_code == 0);
    CHECK(rz.out.find("HOLDS") != std::string::npos);
    CHECK(rz.out.find("saturated") != std::string::npos);

    write_file(dir + "/trunc.csv",
               "t,E0,E1,Eminus1,E1tilde,ERrho,ERrho_t1,ERrho_t2,ERrho_t3,ERrho_t4,"
               "ERrho_t5,abar,rho_Linf,gradc_Linf\n"
               "0,0,0,0\n");
    const CommandResult rt = run_cli("check-condition trunc.csv cfg.ini", dir);
    CHECK(rt.exit_code == 1);
    CHECK(rt.err.find("line 2") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("snapshot: files appear with the documented naming") {
    const std::string dir = make_workdir("ksdg_cli_snap");
    write_file(dir + "/cfg.ini", "[mesh]\nlevel = 2\n"
                                 "[initial]\nkind = gaussian\namplitude = 1000\n"
                                 "[output]\ndirectory = out\ngrid_samples = 8\n");
    const CommandResult r = run_cli("snapshot cfg.ini --times 0 5e-5 1e-4", dir);
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(dir + "/out/snapshot_t0.csv"));
    CHECK(fs::exists(dir + "/out/snapshot_t5e-05.csv"));
    CHECK(fs::exists(dir + "/out/snapshot_t0.0001.csv"));
    std::ifstream in(dir + "/out/snapshot_t0.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "x,y,rho,c");
    CHECK(count_lines(dir + "/out/snapshot_t0.csv") == 65); // header + 8x8 grid
    fs::remove_all(dir);
}

TEST_CASE("usage errors exit with code 1") {
    const std::string dir = make_workdir("ksdg_cli_usage");
    const CommandResult r = run_cli("frobnicate", dir);
    CHECK(r.exit_code == 1);
    const CommandResult r2 = run_cli("run", dir);
    CHECK(r2.exit_code == 1);
    fs::remove_all(dir);
}
