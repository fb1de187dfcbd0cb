# Test package for AtomicLift
