"""Sentinel tokens shared by input encoders, output parsers, and mock backends.

Real-model adapters are expected to map their own conventions onto these
tokens at the boundary.
"""

# History/passage boundary in encoder inputs; also the question/answer
# boundary in generator output.
SEP = "<sep>"

# Paired markers demarcating the answer span inside the answer context.
HL_OPEN = "<hl>"
HL_CLOSE = "</hl>"

# Flow tags appended to generator inputs.
FLOW_OPEN = "<open>"
FLOW_CLOSED = "<closed>"

# Classifier input: marks the current question apart from history questions.
QUESTION_TOKEN = "<Q>"

# Classifier input: question/sentence boundary.
SEGMENT_SEP = "<s>"
