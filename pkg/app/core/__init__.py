# Core utilities module