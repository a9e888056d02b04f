#include "prefrl/cli.hpp"

int main(int argc, char** argv) { return prefrl::run_cli(argc, argv); }
