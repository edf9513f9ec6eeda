#include "pheno/cli.hpp"

int main(int argc, char** argv) { return pheno::dispatch(argc, argv); }
