#include "carreg/cli.hpp"

int main(int argc, char** argv) { return carreg::run_cli(argc, argv); }
