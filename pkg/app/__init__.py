# Cepstra Application Package
