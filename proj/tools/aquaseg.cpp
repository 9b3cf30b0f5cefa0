#include "aquaseg/cli.hpp"

int main(int argc, char** argv) { return aquaseg::run_cli(argc, argv); }
