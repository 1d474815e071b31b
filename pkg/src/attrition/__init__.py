"""Team dropout prediction toolkit for deadline-driven online competitions.

Covers questionnaire validation (Cronbach's alpha, six-factor CFA), team
feature engineering from forum activity, SMOTE balancing, three from-scratch
classifiers, and per-task evaluation reports.
"""

__version__ = "0.1.0"
