#include <iostream>

#include "ksobol/cli.hpp"

int main(int argc, char** argv) {
  try {
    const auto cfg = ksobol::cli::parse_args(argc, argv);
    return ksobol::cli::run(cfg, std::cout, std::cerr);
  } catch (const CLI::CallForHelp&) {
    return 0;
  } catch (const ksobol::Error& e) {
    std::cerr << ksobol::error_json(e).dump() << '\n';
    return 2;
  }
}
