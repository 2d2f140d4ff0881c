#include <cstdlib>
#include <iostream>

#include "cstab/acceptance.hpp"
#include "cstab/report.hpp"

int main(int argc, char** argv) {
  std::uint64_t seed = 0;
  if (argc > 1) seed = std::strtoull(argv[1], nullptr, 10);
  nlohmann::json report;
  int failed = 0;
  try {
    for (const cstab::CriterionResult& r : cstab::run_full_acceptance(seed, &report)) {
      std::cout << cstab::format_line(r) << std::endl;
      if (!r.pass) ++failed;
    }
    cstab::write_text_file(cstab::default_output_dir(), "acceptance.json", report.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "acceptance: " << e.what() << "\n";
    return 1;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
