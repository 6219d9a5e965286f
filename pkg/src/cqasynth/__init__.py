"""Multi-type conversational QA data synthesis.

Generates open-ended, yes/no, and unanswerable question-answer
conversations from raw passages, filters them with a two-level
answerability classifier, builds the classifier's training data, and
measures the results with a CoQA-style evaluation harness.
"""

__version__ = "0.1.0"
