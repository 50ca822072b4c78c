#include "mnl/cli.hpp"

int main(int argc, char** argv) { return mnl::run_cli(argc, argv); }
