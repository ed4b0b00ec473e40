# makes src a package
