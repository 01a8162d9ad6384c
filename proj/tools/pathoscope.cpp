#include <iostream>

#include "pathoscope/workbench/commands.hpp"

int main(int argc, char** argv) { return pathoscope::workbench::run_cli(argc, argv, std::cout, std::cerr); }
