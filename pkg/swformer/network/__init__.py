"""SWformer network modules, instrumentation and checkpoints."""
