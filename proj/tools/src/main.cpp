#include "cli.hpp"

int main(int argc, char** argv) { return hazard::cli::run(argc, argv); }
