#include "cli.hpp"

int main(int argc, char** argv) { return cfcf::cli::run(argc, argv); }
