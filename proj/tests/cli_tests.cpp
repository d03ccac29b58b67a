// Integration checks of the command-line tool: exit-code contract and output
// shapes. Run as: cli_tests <path-to-gnplan-binary>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace {

int g_failures = 0;
std::string g_tool;

struct RunResult {
    int exit_code = -1;
    std::string output; // stdout + stderr
};

RunResult run(const std::string& args) {
    const std::string cmd = g_tool + " " + args + " 2>&1";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        std::cerr << "popen failed for: " << cmd << "\n";
        std::exit(2);
    }
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) {
        r.output.append(buf, n);
    }
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

void expect(bool ok, const std::string& what, const RunResult& r) {
    if (ok) {
        std::printf("[ ok ] %s\n", what.c_str());
    } else {
        ++g_failures;
        std::printf("[FAIL] %s\n  exit=%d\n  output:\n%s\n", what.c_str(), r.exit_code,
                    r.output.c_str());
    }
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: cli_tests <gnplan binary>\n";
        return 2;
    }
    g_tool = argv[1];
    const auto tmp = std::filesystem::temp_directory_path() / "gnplan_cli_test";
    std::filesystem::create_directories(tmp);

    {
        auto r = run("--version");
        expect(r.exit_code == 0 && contains(r.output, "0.1.0"), "--version", r);
    }
    {
        auto r = run("plan --layer 784:512 --layer 512:10");
        expect(r.exit_code == 0 && contains(r.output, "64") && contains(r.output, "10") &&
                   contains(r.output, "case2_upper_bound"),
               "plan two-layer MLP", r);
    }
    {
        auto r = run("plan --layer 128:128");
        expect(r.exit_code == 0 && contains(r.output, "1.031250"), "plan equal widths K value", r);
    }
    {
        auto r = run("plan");
        expect(r.exit_code == 2, "plan without layers is a usage error", r);
    }
    {
        auto r = run("plan --layer nonsense");
        expect(r.exit_code == 2, "malformed layer spec is a usage error", r);
    }
    {
        auto r = run("plan --layer 64:32:bogus");
        expect(r.exit_code == 2 && contains(r.output, "valid"), "unknown activation lists names",
               r);
    }
    {
        const auto json_path = (tmp / "plan.json").string();
        auto r = run("plan --layer 784:512 --format json --out " + json_path);
        std::ifstream f(json_path);
        std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        expect(r.exit_code == 0 && contains(content, "\"manifest\"") &&
                   contains(content, "\"g_practical\": 64"),
               "plan json output with manifest", r);
    }
    {
        const auto arch = (tmp / "arch.txt").string();
        std::ofstream f(arch);
        f << "# two layers\n784 512\n512 10 relu\n";
        f.close();
        auto r = run("plan --arch-file " + arch);
        expect(r.exit_code == 0 && contains(r.output, "64"), "plan from architecture file", r);
    }
    {
        auto r = run("probe --n-in 64 --n-out 32 --groups 8 --trials 400 --tol 0.6");
        expect(r.exit_code == 0 && contains(r.output, "within tolerance"), "probe within loose tol",
               r);
    }
    {
        auto r = run("probe --n-in 64 --n-out 32 --groups 8 --trials 200 --tol 0.0001");
        expect(r.exit_code == 1, "probe exceeding tight tol exits 1", r);
    }
    {
        auto r = run("probe --n-in 256 --n-out 128 --groups 7 --trials 10");
        expect(r.exit_code == 2, "probe with non-dividing groups is a usage error", r);
    }
    {
        const auto csv_path = (tmp / "probe.csv").string();
        auto r = run("probe --n-in 48 --n-out 24 --groups 6 --trials 100 --tol 0.9 --format csv "
                     "--out " +
                     csv_path);
        std::ifstream f(csv_path);
        std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        expect(r.exit_code == 0 && contains(content, "eq,empirical,theoretical,rel_error") &&
                   contains(content, "# manifest:"),
               "probe csv output with header and manifest", r);
    }
    {
        auto r = run("gains --activation relu --sigma 1 --samples 40000");
        expect(r.exit_code == 0 && contains(r.output, "0.5"), "gains for relu", r);
    }
    {
        auto r = run("gains --activation prelu:0.25 --sigma 1 --samples 40000");
        expect(r.exit_code == 0 && contains(r.output, "0.53125"), "gains prints prelu closed form",
               r);
    }
    {
        auto r = run("gains --activation bogus --sigma 1");
        expect(r.exit_code == 2 && contains(r.output, "valid"), "unknown gains activation", r);
    }
    {
        auto r = run("gains --activation relu --sigma 0.1 --sigma 1 --sigma 10 "
                     "--check-homogeneity --samples 60000");
        expect(r.exit_code == 0 && contains(r.output, "yes"), "relu is homogeneous", r);
    }
    {
        auto r = run("gains --activation sigmoid --sigma 0.1 --sigma 1 --sigma 10 "
                     "--check-homogeneity --samples 60000");
        expect(r.exit_code == 1, "sigmoid fails homogeneity with exit 1", r);
    }
    {
        auto r = run("gradcheck --configs 1");
        expect(r.exit_code == 0 && contains(r.output, "worst"), "gradcheck default matrix", r);
    }
    {
        auto r = run("gradcheck --n-in 8 --n-out 8 --groups 8");
        expect(r.exit_code == 0 && contains(r.output, "skipped"),
               "gradcheck skips the degenerate group size", r);
    }
    {
        // The override must be reflected in the report header and manifest; a
        // coarse step may legitimately trip the threshold, so only the echo
        // is asserted.
        const auto json_path = (tmp / "gradcheck.json").string();
        auto r = run("gradcheck --h 1e-4 --configs 1 --out " + json_path);
        std::ifstream f(json_path);
        std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        expect((r.exit_code == 0 || r.exit_code == 1) && contains(r.output, "h=0.0001") &&
                   contains(content, "\"h\": 0.0001") && contains(content, "\"manifest\""),
               "gradcheck honors --h", r);
    }
    {
        const auto prefix = (tmp / "trainrep").string();
        auto r = run("train --data synth:classes=3,per_class=40,test_per_class=20,d=16,sep=8 "
                     "--hidden 8 --groups 2 --epochs 2 --batch-size 16 --out-prefix " +
                     prefix);
        std::ifstream csv(prefix + ".csv");
        std::string csv_content((std::istreambuf_iterator<char>(csv)),
                                std::istreambuf_iterator<char>());
        std::ifstream js(prefix + ".json");
        std::string js_content((std::istreambuf_iterator<char>(js)),
                               std::istreambuf_iterator<char>());
        expect(r.exit_code == 0 && contains(csv_content, "epoch,train_loss,test_error_pct") &&
                   contains(js_content, "\"manifest\"") && contains(js_content, "\"seed\""),
               "train writes csv and json reports", r);
    }
    {
        auto r = run("train --data synth:classes=3,per_class=30,d=16,sep=8 --hidden 8 --groups 3 "
                     "--epochs 1");
        expect(r.exit_code == 2, "non-dividing groups is a usage error", r);
    }
    {
        auto r = run("train --data synth:classes=3,per_class=20,d=16,sep=8 --hidden 8 "
                     "--groups practical --epochs 1 --out-prefix " +
                     (tmp / "prac").string());
        expect(r.exit_code == 0, "groups=practical resolves via the planner", r);
    }
    {
        auto r = run("train --data idx:/nonexistent/images,/nonexistent/labels --epochs 1 "
                     "--test-data idx:/nonexistent/i,/nonexistent/l");
        expect(r.exit_code == 3, "missing idx data exits 3", r);
    }
    {
        // End-to-end IDX path on a tiny generated fixture.
        const auto img = (tmp / "imgs.idx").string();
        const auto lbl = (tmp / "lbls.idx").string();
        auto write_u32 = [](std::ofstream& f, std::uint32_t v) {
            unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v)};
            f.write(reinterpret_cast<char*>(b), 4);
        };
        {
            std::ofstream fi(img, std::ios::binary);
            write_u32(fi, 0x00000803);
            write_u32(fi, 32);
            write_u32(fi, 28);
            write_u32(fi, 28);
            for (int i = 0; i < 32 * 784; ++i) {
                const char px = static_cast<char>((i * 37) % 256);
                fi.write(&px, 1);
            }
            std::ofstream fl(lbl, std::ios::binary);
            write_u32(fl, 0x00000801);
            write_u32(fl, 32);
            for (int i = 0; i < 32; ++i) {
                const char lab = static_cast<char>(i % 10);
                fl.write(&lab, 1);
            }
        }
        const auto prefix = (tmp / "idxrep").string();
        auto r = run("train --data idx:" + img + "," + lbl + " --test-data idx:" + img + "," +
                     lbl + " --hidden 16 --groups 4 --epochs 1 --batch-size 8 --out-prefix " +
                     prefix);
        expect(r.exit_code == 0 && std::filesystem::exists(prefix + ".csv"),
               "train runs on idx fixtures", r);
    }
    {
        const auto gains_path = (tmp / "gains.json").string();
        std::ofstream f(gains_path);
        f << "{\"tanh\": {\"forward\": 0.394, \"backward\": 0.464}}\n";
        f.close();
        auto r = run("plan --layer 784:512:tanh --gains-file " + gains_path);
        expect(r.exit_code == 0 && contains(r.output, "32") &&
                   contains(r.output, "criteria-disagree"),
               "plan uses measured gains and flags criterion disagreement", r);
    }
    {
        const auto prefix = (tmp / "sweeprep").string();
        auto r = run("train --data synth:classes=3,per_class=30,test_per_class=15,d=16,sep=8 "
                     "--hidden 8 --sweep 1,4 --runs 1 --epochs 2 --batch-size 16 --out-prefix " +
                     prefix);
        std::ifstream js(prefix + ".json");
        std::string js_content((std::istreambuf_iterator<char>(js)),
                               std::istreambuf_iterator<char>());
        const bool csvs = std::filesystem::exists(prefix + "_g1_run0.csv") &&
                          std::filesystem::exists(prefix + "_g4_run0.csv");
        expect(r.exit_code == 0 && contains(js_content, "\"sweep\"") && csvs,
               "sweep writes per-run csvs and a summary", r);
    }

    std::printf("%s: %d failure(s)\n", g_failures ? "FAILED" : "PASSED", g_failures);
    return g_failures ? 1 : 0;
}
