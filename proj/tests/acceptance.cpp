// Acceptance gate: one PASS/FAIL line per criterion.
//   acceptance            all criteria
//   acceptance 3 [dir]    criterion 3, CSVs into dir

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <jsplice/harness.hpp>

using namespace jsplice::bench;

namespace {

std::string out_dir;

struct Sweep {
  std::string id;
  std::vector<int> ns;
};

bool run_sweeps(const std::vector<Sweep>& sweeps, std::string& summary) {
  bool ok = true;
  for (const auto& s : sweeps) {
    const Experiment& e = find_experiment(s.id);
    RunContext ctx;
    ctx.log = [&](const std::string& m) { std::cout << "  " << s.id << ": " << m << std::endl; };
    if (!out_dir.empty()) ctx.out_dir = out_dir;
    Table t = run_experiment(e, s.ns, ctx);
    std::cout << to_csv(e, t);
    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      std::ofstream(std::filesystem::path(out_dir) / (s.id + ".csv")) << to_csv(e, t);
    }
    for (const auto& r : golden(e, t)) {
      bool good = r.evaluated && r.pass;
      std::cout << "  " << (good ? "ok  " : "BAD ") << s.id << ": " << r.label << " [" << r.detail << "]\n";
      if (!good) {
        ok = false;
        summary += (summary.empty() ? "" : "; ") + s.id + " " + r.label;
      }
    }
  }
  return ok;
}

bool property_suite(std::string& summary) {
  auto t0 = std::chrono::steady_clock::now();
  std::string cmd = std::string("\"") + UNIT_TESTS_PATH + "\" --gtest_filter='Property*' --gtest_brief=1";
  int rc = std::system(cmd.c_str());
  double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  summary = "property suite exit " + std::to_string(rc) + " in " + fmt(s, "%.1f") + " s (limit 60 s)";
  return rc == 0 && s < 60.0;
}

bool criterion(int k, std::string& what, std::string& why) {
  switch (k) {
    case 1:
      what = "spliced Laplacian, ellipse (ex3.1)";
      return run_sweeps({{"ex3.1", {64, 128, 256, 512}}}, why);
    case 2:
      what = "Poisson circle (ex4.1)";
      return run_sweeps({{"ex4.1", {20, 40, 80, 160, 320, 640}}}, why);
    case 3:
      what = "Poisson C1 stadium (ex4.3)";
      return run_sweeps({{"ex4.3", {20, 40, 80, 160, 320, 640}}}, why);
    case 4:
      what = "Poisson C0 two-disc union (ex4.4)";
      return run_sweeps({{"ex4.4", {160, 320, 640, 1280}}}, why);
    case 5:
      what = "3D ellipsoid Poisson (ex4.5)";
      return run_sweeps({{"ex4.5", {64, 128, 256}}}, why);
    case 6:
      what = "surface quadrature (ex5.1, ex5.2, ex5.3)";
      return run_sweeps({{"ex5.1", {64, 128, 256, 512, 1024}},
                         {"ex5.2", {64, 128, 256, 512, 1024}},
                         {"ex5.3", {64, 128, 256}}},
                        why);
    case 7:
      what = "flow with surface tension, Re = 10 (ex6.1)";
      return run_sweeps({{"ex6.1", {64, 128, 256}}}, why);
    case 8:
      what = "flow with surface tension, Re = 100 (ex6.2)";
      return run_sweeps({{"ex6.2", {64, 128, 256}}}, why);
    case 9:
      what = "property suite under 60 s";
      return property_suite(why);
  }
  throw std::invalid_argument("criteria are numbered 1 to 9");
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  if (argc > 1) which.push_back(std::atoi(argv[1]));
  else which = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  if (argc > 2) out_dir = argv[2];
  bool all = true;
  std::vector<std::string> lines;
  for (int k : which) {
    std::string what, why;
    bool ok = false;
    auto t0 = std::chrono::steady_clock::now();
    try {
      ok = criterion(k, what, why);
    } catch (const std::exception& ex) {
      why = std::string("exception: ") + ex.what();
    }
    double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string line = std::string(ok ? "PASS" : "FAIL") + " criterion " + std::to_string(k) + ": " + what + " (" +
                       fmt(s, "%.1f") + " s)" + (why.empty() ? "" : " -- " + why);
    std::cout << line << std::endl;
    lines.push_back(line);
    all = all && ok;
  }
  if (lines.size() > 1) {
    std::cout << "\nsummary\n";
    for (const auto& l : lines) std::cout << l << '\n';
  }
  return all ? 0 : 1;
}
