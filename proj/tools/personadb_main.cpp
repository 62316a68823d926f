#include <iostream>

#include "personadb/cli.hpp"

int main(int argc, char** argv) {
  return personadb::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
